#pragma once

// Strict XML 1.0 well-formedness check for generated documents: one root,
// balanced and correctly nested tags, quoted unique attributes, known or
// numeric entities only, no stray '<' or '&'. DTDs are rejected.

#include <cctype>
#include <set>
#include <string>
#include <vector>

namespace xml {

struct Result {
  bool ok = true;
  std::string error;
  std::size_t elements = 0;
};

namespace detail {

inline bool name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == ':'; }
inline bool name_char(char c) {
  return name_start(c) || std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '.';
}

inline bool entity_ok(const std::string& s, std::size_t& i) {
  const auto end = s.find(';', i);
  if (end == std::string::npos) return false;
  const std::string name = s.substr(i + 1, end - i - 1);
  i = end;
  static const std::set<std::string> known{"amp", "lt", "gt", "quot", "apos"};
  if (known.count(name)) return true;
  if (name.size() > 1 && name[0] == '#') {
    const bool hex = name[1] == 'x';
    const std::size_t start = hex ? 2 : 1;
    if (start >= name.size()) return false;
    for (std::size_t k = start; k < name.size(); ++k)
      if (!(hex ? std::isxdigit(static_cast<unsigned char>(name[k])) : std::isdigit(static_cast<unsigned char>(name[k]))))
        return false;
    return true;
  }
  return false;
}

}  // namespace detail

inline Result check(const std::string& s) {
  Result r;
  auto fail = [&](const std::string& msg, std::size_t at) {
    r.ok = false;
    r.error = msg + " at offset " + std::to_string(at);
    return r;
  };
  std::vector<std::string> stack;
  bool root_seen = false;
  std::size_t i = 0;
  if (s.rfind("<?xml", 0) == 0) {
    i = s.find("?>");
    if (i == std::string::npos) return fail("unterminated declaration", 0);
    i += 2;
  }
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '&') {
      if (stack.empty()) return fail("entity outside root", i);
      if (!detail::entity_ok(s, i)) return fail("bad entity", i);
      continue;
    }
    if (c != '<') {
      if (stack.empty() && !std::isspace(static_cast<unsigned char>(c))) return fail("text outside root", i);
      continue;
    }
    if (s.compare(i, 4, "<!--") == 0) {
      const auto end = s.find("-->", i + 4);
      if (end == std::string::npos) return fail("unterminated comment", i);
      i = end + 2;
      continue;
    }
    if (s.compare(i, 2, "<!") == 0 || s.compare(i, 2, "<?") == 0) return fail("unsupported markup", i);
    const bool closing = i + 1 < s.size() && s[i + 1] == '/';
    std::size_t k = i + (closing ? 2 : 1);
    if (k >= s.size() || !detail::name_start(s[k])) return fail("bad tag name", i);
    const std::size_t name_begin = k;
    while (k < s.size() && detail::name_char(s[k])) ++k;
    const std::string name = s.substr(name_begin, k - name_begin);
    if (closing) {
      while (k < s.size() && std::isspace(static_cast<unsigned char>(s[k]))) ++k;
      if (k >= s.size() || s[k] != '>') return fail("bad closing tag", i);
      if (stack.empty() || stack.back() != name) return fail("mismatched </" + name + ">", i);
      stack.pop_back();
      i = k;
      continue;
    }
    if (stack.empty() && root_seen) return fail("second root element", i);
    std::set<std::string> attrs;
    bool self_closing = false;
    for (;;) {
      const std::size_t before = k;
      while (k < s.size() && std::isspace(static_cast<unsigned char>(s[k]))) ++k;
      if (k >= s.size()) return fail("unterminated tag", i);
      if (s[k] == '>') break;
      if (s[k] == '/') {
        if (k + 1 >= s.size() || s[k + 1] != '>') return fail("bad self-closing tag", k);
        self_closing = true;
        ++k;
        break;
      }
      if (k == before) return fail("attributes must be separated by whitespace", k);
      if (!detail::name_start(s[k])) return fail("bad attribute name", k);
      const std::size_t a = k;
      while (k < s.size() && detail::name_char(s[k])) ++k;
      const std::string attr = s.substr(a, k - a);
      if (!attrs.insert(attr).second) return fail("duplicate attribute " + attr, a);
      if (k >= s.size() || s[k] != '=') return fail("attribute without value", k);
      ++k;
      if (k >= s.size() || (s[k] != '"' && s[k] != '\'')) return fail("unquoted attribute", k);
      const char q = s[k++];
      for (; k < s.size() && s[k] != q; ++k) {
        if (s[k] == '<') return fail("'<' in attribute value", k);
        if (s[k] == '&' && !detail::entity_ok(s, k)) return fail("bad entity in attribute", k);
      }
      if (k >= s.size()) return fail("unterminated attribute value", a);
      ++k;
    }
    ++r.elements;
    root_seen = true;
    if (!self_closing) stack.push_back(name);
    i = k;
  }
  if (!stack.empty()) return fail("unclosed <" + stack.back() + ">", s.size());
  if (!root_seen) return fail("no root element", 0);
  return r;
}

}  // namespace xml

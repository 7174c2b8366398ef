#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "droidfp/vocab.hpp"

namespace droidfp {

// ---------------------------------------------------------------------------
// Parse tree for the line-oriented assembly grammar:
//   class <name> / method <name> / end blocks, with instruction lines
//   invoke-<kind> {regs}, <call>(<args>)<ret>
//   new-instance <reg>, <class>
//   <iget|iput|sget|sput>[-suffix] <regs>, <field> <type>
//   anything else is kept as an opaque "other" instruction.
// ---------------------------------------------------------------------------

enum class InstrKind { Invoke, NewInstance, FieldAccess, Other };

struct Instruction {
  InstrKind kind = InstrKind::Other;
  int line = 0;
  std::string text;  // operands preserved verbatim for diagnostics

  // Invoke
  std::string invoke_kind;  // virtual, direct, static, direct/range, ...
  std::string call;         // Class.method (or bare class for ctor form)
  std::vector<std::string> args;
  std::string ret;
  bool bare_callee = false;  // no '(...)' on the line, e.g. ctor shorthand

  // NewInstance
  std::string object_class;

  // FieldAccess
  std::string field_op;  // iget-object, sput, ...
  std::string field_name;
  std::string field_type;
};

struct ParsedMethod {
  std::string name;
  int line = 0;
  std::vector<Instruction> instructions;
};

struct ParsedClass {
  std::string name;
  int line = 0;
  std::vector<ParsedMethod> methods;
};

struct ParsedApp {
  std::vector<ParsedClass> classes;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline bool starts_with(std::string_view s, std::string_view p) {
  return s.substr(0, p.size()) == p;
}

inline bool is_field_opcode(std::string_view op) {
  return starts_with(op, "iget") || starts_with(op, "iput") ||
         starts_with(op, "sget") || starts_with(op, "sput");
}

inline Instruction parse_instruction(std::string_view line, int lineno) {
  Instruction ins;
  ins.line = lineno;
  ins.text = std::string(line);

  const std::size_t sp = line.find(' ');
  const std::string_view op = line.substr(0, sp);

  if (starts_with(op, "invoke-")) {
    ins.kind = InstrKind::Invoke;
    ins.invoke_kind = std::string(op.substr(7));
    std::string_view rest = sp == std::string_view::npos
                                ? std::string_view{}
                                : trim(line.substr(sp + 1));
    // {regs},
    if (rest.empty() || rest.front() != '{') {
      ins.kind = InstrKind::Other;  // grammar catch-all
      return ins;
    }
    const std::size_t close = rest.find('}');
    if (close == std::string_view::npos)
      throw ParseError(lineno, "unterminated register list");
    rest = trim(rest.substr(close + 1));
    if (!rest.empty() && rest.front() == ',') rest = trim(rest.substr(1));
    if (rest.empty()) throw ParseError(lineno, "invoke without callee");
    const std::size_t paren = rest.find('(');
    if (paren == std::string_view::npos) {
      ins.call = std::string(rest);
      ins.bare_callee = true;
      return ins;
    }
    ins.call = std::string(trim(rest.substr(0, paren)));
    const std::size_t paren_end = rest.find(')', paren);
    if (paren_end == std::string_view::npos)
      throw ParseError(lineno, "unterminated argument list");
    std::string_view arglist = rest.substr(paren + 1, paren_end - paren - 1);
    while (!arglist.empty()) {
      const std::size_t comma = arglist.find(',');
      std::string_view a = trim(arglist.substr(0, comma));
      if (!a.empty()) ins.args.emplace_back(a);
      if (comma == std::string_view::npos) break;
      arglist = arglist.substr(comma + 1);
    }
    ins.ret = std::string(trim(rest.substr(paren_end + 1)));
    return ins;
  }

  if (op == "new-instance") {
    std::string_view rest = sp == std::string_view::npos
                                ? std::string_view{}
                                : trim(line.substr(sp + 1));
    const std::size_t comma = rest.find(',');
    if (comma == std::string_view::npos)
      throw ParseError(lineno, "new-instance needs '<reg>, <class>'");
    ins.kind = InstrKind::NewInstance;
    ins.object_class = std::string(trim(rest.substr(comma + 1)));
    if (ins.object_class.empty())
      throw ParseError(lineno, "new-instance with empty class");
    return ins;
  }

  if (is_field_opcode(op)) {
    std::string_view rest = sp == std::string_view::npos
                                ? std::string_view{}
                                : trim(line.substr(sp + 1));
    const std::size_t comma = rest.rfind(',');
    if (comma == std::string_view::npos)
      throw ParseError(lineno, "field access needs '<regs>, <field> <type>'");
    std::string_view tail = trim(rest.substr(comma + 1));
    const std::size_t space = tail.find(' ');
    if (space == std::string_view::npos)
      throw ParseError(lineno, "field access needs '<field> <type>'");
    ins.kind = InstrKind::FieldAccess;
    ins.field_op = std::string(op);
    ins.field_name = std::string(trim(tail.substr(0, space)));
    ins.field_type = std::string(trim(tail.substr(space + 1)));
    return ins;
  }

  return ins;  // catch-all: opaque instruction
}

}  // namespace detail

// Single pass over the text; no backtracking beyond one line.
inline ParsedApp parse(std::string_view source_text) {
  ParsedApp app;
  ParsedClass* cls = nullptr;
  ParsedMethod* method = nullptr;

  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= source_text.size()) {
    const std::size_t nl = source_text.find('\n', pos);
    std::string_view raw =
        source_text.substr(pos, nl == std::string_view::npos ? std::string_view::npos
                                                             : nl - pos);
    pos = nl == std::string_view::npos ? source_text.size() + 1 : nl + 1;
    ++lineno;
    std::string_view line = detail::trim(raw);
    if (line.empty() || detail::starts_with(line, "//")) continue;

    if (detail::starts_with(line, "class ") ||
        detail::starts_with(line, "class\t")) {
      if (cls != nullptr)
        throw ParseError(lineno, "nested class block");
      std::string name(detail::trim(line.substr(6)));
      if (name.empty()) throw ParseError(lineno, "class without a name");
      app.classes.push_back({std::move(name), lineno, {}});
      cls = &app.classes.back();
      continue;
    }
    if (detail::starts_with(line, "method ") ||
        detail::starts_with(line, "method\t")) {
      if (cls == nullptr)
        throw ParseError(lineno, "method outside a class block");
      if (method != nullptr) throw ParseError(lineno, "nested method block");
      std::string name(detail::trim(line.substr(7)));
      if (name.empty()) throw ParseError(lineno, "method without a name");
      cls->methods.push_back({std::move(name), lineno, {}});
      method = &cls->methods.back();
      continue;
    }
    if (line == "end") {
      if (method != nullptr) {
        method = nullptr;
      } else if (cls != nullptr) {
        cls = nullptr;
      } else {
        throw ParseError(lineno, "'end' with no open block");
      }
      continue;
    }
    if (method == nullptr)
      throw ParseError(lineno, "instruction outside a method block");
    method->instructions.push_back(detail::parse_instruction(line, lineno));
  }
  if (method != nullptr || cls != nullptr)
    throw ParseError(lineno, "unterminated block at end of input");
  return app;
}

// ---------------------------------------------------------------------------
// Canonicalization: the platform-asset skeleton of an instruction.
// ---------------------------------------------------------------------------

namespace detail {

// Unify package separators to '/' and strip descriptor syntax (leading 'L',
// trailing ';').
inline std::string normalize_class(std::string_view name) {
  if (name.size() >= 2 && name.front() == 'L' && name.back() == ';')
    name = name.substr(1, name.size() - 2);
  std::string out(name);
  std::replace(out.begin(), out.end(), '.', '/');
  return out;
}

// Class.member: the class part is normalized, the final '.' before the
// member name is kept.
inline std::string normalize_member(std::string_view name) {
  const std::size_t dot = name.find_last_of("./");
  if (dot == std::string_view::npos || name[dot] == '/')
    return normalize_class(name);
  std::string out = normalize_class(name.substr(0, dot));
  out += '.';
  out += name.substr(dot + 1);
  return out;
}

inline bool is_constructor_call(const Instruction& ins) {
  if (ins.invoke_kind.rfind("direct", 0) != 0) return false;
  if (ins.bare_callee) return true;  // invoke-direct {..}, <class>
  const std::size_t dot = ins.call.find_last_of('.');
  if (dot == std::string::npos) return false;
  const std::string_view member{ins.call.data() + dot + 1,
                                ins.call.size() - dot - 1};
  return member == "<init>" || member == "init";
}

}  // namespace detail

// Total on parsed nodes: method invocation -> [call, args..., ret];
// object manipulation -> [class]; field access -> [field name, field type];
// everything else -> []. Registers, literals and offsets are discarded.
inline std::vector<std::string> canonicalize(const Instruction& ins) {
  std::vector<std::string> out;
  switch (ins.kind) {
    case InstrKind::Invoke: {
      if (detail::is_constructor_call(ins)) {
        // constructor invocation == object manipulation: emit the class only
        std::string_view cls(ins.call);
        const std::size_t dot = ins.call.find_last_of('.');
        if (dot != std::string::npos) {
          std::string_view member = cls.substr(dot + 1);
          if (member == "<init>" || member == "init") cls = cls.substr(0, dot);
        }
        out.push_back(detail::normalize_class(cls));
        break;
      }
      out.push_back(detail::normalize_member(ins.call));
      for (const auto& a : ins.args)
        out.push_back(detail::normalize_class(a));
      if (!ins.ret.empty()) out.push_back(detail::normalize_class(ins.ret));
      break;
    }
    case InstrKind::NewInstance:
      out.push_back(detail::normalize_class(ins.object_class));
      break;
    case InstrKind::FieldAccess:
      out.push_back(detail::normalize_member(ins.field_name));
      out.push_back(detail::normalize_class(ins.field_type));
      break;
    case InstrKind::Other:
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tokenized app representation.
// ---------------------------------------------------------------------------

struct MethodSequence {
  std::string class_name;
  std::string method_name;
  std::vector<TokenId> tokens;
};

// Multiset of per-method canonical token sequences. Equality is defined on
// the token-sequence multiset only; class/method names are diagnostics.
struct AppRepresentation {
  std::vector<MethodSequence> sequences;

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.tokens.size();
    return n;
  }

  std::vector<std::vector<TokenId>> sorted_token_multiset() const {
    std::vector<std::vector<TokenId>> m;
    m.reserve(sequences.size());
    for (const auto& s : sequences) m.push_back(s.tokens);
    std::sort(m.begin(), m.end());
    return m;
  }

  bool operator==(const AppRepresentation& other) const {
    return sorted_token_multiset() == other.sorted_token_multiset();
  }
};

// Keeps only vocabulary assets, in source order; out-of-vocabulary names are
// dropped and methods that filter to empty are omitted.
inline AppRepresentation tokenize(const ParsedApp& app,
                                  const Vocabulary& vocab) {
  AppRepresentation rep;
  for (const auto& cls : app.classes) {
    for (const auto& m : cls.methods) {
      MethodSequence seq;
      seq.class_name = cls.name;
      seq.method_name = m.name;
      for (const auto& ins : m.instructions) {
        for (const auto& asset : canonicalize(ins)) {
          TokenId id;
          if (vocab.lookup(asset, id)) seq.tokens.push_back(id);
        }
      }
      if (!seq.tokens.empty()) rep.sequences.push_back(std::move(seq));
    }
  }
  return rep;
}

// Scans a parsed app for every canonical asset name (vocabulary building).
inline void collect_assets(const ParsedApp& app,
                           std::vector<std::string>& out) {
  for (const auto& cls : app.classes)
    for (const auto& m : cls.methods)
      for (const auto& ins : m.instructions)
        for (auto& a : canonicalize(ins)) out.push_back(std::move(a));
}

}  // namespace droidfp

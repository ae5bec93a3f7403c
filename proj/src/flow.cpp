#include "cimmlc/flow.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cimmlc/errors.hpp"

namespace cim {

using nlohmann::json;

const char* to_string(OpCode c) {
  switch (c) {
    case OpCode::ReadCore:
      return "cim.read_core";
    case OpCode::WriteCore:
      return "cim.write_core";
    case OpCode::ReadXb:
      return "cim.read_xb";
    case OpCode::WriteXb:
      return "cim.write_xb";
    case OpCode::ReadRows:
      return "cim.read_rows";
    case OpCode::WriteRows:
      return "cim.write_rows";
    case OpCode::Dcom:
      return "dcom";
    case OpCode::Mov:
      return "mov";
  }
  return "?";
}

MetaOp read_core(const std::string& kind, const std::string& param, int core, int64_t src, int64_t des) {
  MetaOp op;
  op.code = OpCode::ReadCore;
  op.name = kind;
  op.param = param;
  op.core = core;
  op.src = src;
  op.des = des;
  return op;
}

MetaOp write_core(int core, const std::string& param) {
  MetaOp op;
  op.code = OpCode::WriteCore;
  op.core = core;
  op.param = param;
  return op;
}

MetaOp read_xb(int core, int xb, int64_t src, int64_t des) {
  MetaOp op;
  op.code = OpCode::ReadXb;
  op.core = core;
  op.xb = xb;
  op.src = src;
  op.des = des;
  return op;
}

MetaOp write_xb(int core, int xb, const std::string& param) {
  MetaOp op;
  op.code = OpCode::WriteXb;
  op.core = core;
  op.xb = xb;
  op.param = param;
  return op;
}

MetaOp read_rows(int core, int xb, int lo, int hi, int64_t src, int64_t des) {
  MetaOp op;
  op.code = OpCode::ReadRows;
  op.core = core;
  op.xb = xb;
  op.row_lo = lo;
  op.row_hi = hi;
  op.src = src;
  op.des = des;
  return op;
}

MetaOp write_rows(int core, int xb, int lo, int hi, const std::string& param) {
  MetaOp op;
  op.code = OpCode::WriteRows;
  op.core = core;
  op.xb = xb;
  op.row_lo = lo;
  op.row_hi = hi;
  op.param = param;
  return op;
}

MetaOp dcom(const std::string& func, Level level, int64_t src, int64_t des, int64_t len, const std::string& param) {
  MetaOp op;
  op.code = OpCode::Dcom;
  op.name = func;
  op.src_level = level;
  op.des_level = level;
  op.src = src;
  op.des = des;
  op.len = len;
  op.param = param;
  return op;
}

MetaOp mov(Level src_level, int64_t src, Level des_level, int64_t des, int64_t len) {
  MetaOp op;
  op.code = OpCode::Mov;
  op.src_level = src_level;
  op.des_level = des_level;
  op.src = src;
  op.des = des;
  op.len = len;
  return op;
}

const json& Flow::param(const std::string& name) const {
  for (const auto& [k, v] : params)
    if (k == name) return v;
  throw SemanticError("undefined parameter symbol '" + name + "'");
}

std::string Flow::add_param(json value) {
  std::string name = "p" + std::to_string(params.size());
  params.emplace_back(name, std::move(value));
  return name;
}

// ---------------------------------------------------------------- serialization

std::string serialize_instr(const MetaOp& op) {
  std::ostringstream s;
  s << to_string(op.code) << "(";
  switch (op.code) {
    case OpCode::ReadCore:
      s << op.name << "," << op.param << "," << op.core << "," << op.src << "," << op.des;
      break;
    case OpCode::WriteCore:
      s << op.core << "," << op.param;
      break;
    case OpCode::ReadXb:
      s << op.core << "," << op.xb << "," << op.src << "," << op.des;
      break;
    case OpCode::WriteXb:
      s << op.core << "," << op.xb << "," << op.param;
      break;
    case OpCode::ReadRows:
      s << op.core << "," << op.xb << "," << op.row_lo << "," << op.row_hi << "," << op.src << "," << op.des;
      break;
    case OpCode::WriteRows:
      s << op.core << "," << op.xb << "," << op.row_lo << "," << op.row_hi << "," << op.param;
      break;
    case OpCode::Dcom:
      s << op.name << "," << op.src_level.str() << "," << op.src << "," << op.des << "," << op.len;
      if (!op.param.empty()) s << "," << op.param;
      break;
    case OpCode::Mov:
      s << op.src_level.str() << "," << op.src << "," << op.des_level.str() << "," << op.des << "," << op.len;
      break;
  }
  s << ")";
  return s.str();
}

std::string serialize_statement(const Statement& st) {
  if (!st.parallel) return serialize_instr(st.ops.at(0));
  std::string out = "parallel{";
  for (size_t i = 0; i < st.ops.size(); ++i) {
    if (i) out += ",";
    out += serialize_instr(st.ops[i]);
  }
  return out + "}";
}

namespace {

std::string dims_str(const std::vector<int64_t>& dims) {
  std::string s;
  for (size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s;
}

}  // namespace

std::string serialize_flow(const Flow& flow) {
  std::ostringstream s;
  if (!flow.arch_hash.empty()) s << "!arch " << flow.arch_hash << "\n";
  if (!flow.mode.empty()) s << "!mode " << flow.mode << "\n";
  for (const auto& b : flow.inputs)
    s << "!input " << b.name << " " << b.level.str() << " " << b.addr << " " << dims_str(b.dims) << "\n";
  for (const auto& b : flow.outputs)
    s << "!output " << b.name << " " << b.level.str() << " " << b.addr << " " << dims_str(b.dims) << "\n";
  for (const auto& [name, value] : flow.params) s << "!param " << name << " " << value.dump() << "\n";
  for (const auto& st : flow.body) s << serialize_statement(st) << "\n";
  return s.str();
}

// ---------------------------------------------------------------- parsing

namespace {

class LineParser {
 public:
  LineParser(const std::string& text, int line) : t_(text), line_(line) {}

  [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(msg, line_, static_cast<int>(pos_) + 1); }

  bool at_end() const { return pos_ >= t_.size(); }
  char peek() const { return at_end() ? '\0' : t_[pos_]; }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'" + (at_end() ? " before end of line" : ""));
    ++pos_;
  }

  bool accept(const std::string& s) {
    if (t_.compare(pos_, s.size(), s) == 0) {
      pos_ += s.size();
      return true;
    }
    return false;
  }

  std::string word() {
    const size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '.')) ++pos_;
    if (start == pos_) fail("expected identifier");
    return t_.substr(start, pos_ - start);
  }

  int64_t number() {
    const size_t start = pos_;
    if (peek() == '-') ++pos_;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
    if (start == pos_ || (pos_ - start == 1 && t_[start] == '-')) {
      pos_ = start;
      fail("expected integer");
    }
    return std::stoll(t_.substr(start, pos_ - start));
  }

  Level level() {
    const size_t start = pos_;
    const std::string w = word();
    if (w == "L0") return {};
    if (w.rfind("L1.", 0) == 0 && w.size() > 3 &&
        std::all_of(w.begin() + 3, w.end(), [](unsigned char c) { return std::isdigit(c); }))
      return {std::stoi(w.substr(3))};
    pos_ = start;
    fail("expected buffer level L0 or L1.<core>");
  }

  MetaOp instr() {
    const size_t start = pos_;
    const std::string name = word();
    MetaOp op;
    expect('(');
    auto comma = [&] { expect(','); };
    if (name == "cim.read_core") {
      op.code = OpCode::ReadCore;
      op.name = word();
      comma();
      op.param = word();
      comma();
      op.core = static_cast<int>(number());
      comma();
      op.src = number();
      comma();
      op.des = number();
    } else if (name == "cim.write_core") {
      op.code = OpCode::WriteCore;
      op.core = static_cast<int>(number());
      comma();
      op.param = word();
    } else if (name == "cim.read_xb") {
      op.code = OpCode::ReadXb;
      op.core = static_cast<int>(number());
      comma();
      op.xb = static_cast<int>(number());
      comma();
      op.src = number();
      comma();
      op.des = number();
    } else if (name == "cim.write_xb") {
      op.code = OpCode::WriteXb;
      op.core = static_cast<int>(number());
      comma();
      op.xb = static_cast<int>(number());
      comma();
      op.param = word();
    } else if (name == "cim.read_rows" || name == "cim.write_rows") {
      op.code = name == "cim.read_rows" ? OpCode::ReadRows : OpCode::WriteRows;
      op.core = static_cast<int>(number());
      comma();
      op.xb = static_cast<int>(number());
      comma();
      op.row_lo = static_cast<int>(number());
      comma();
      op.row_hi = static_cast<int>(number());
      comma();
      if (op.code == OpCode::ReadRows) {
        op.src = number();
        comma();
        op.des = number();
      } else {
        op.param = word();
      }
    } else if (name == "dcom") {
      op.code = OpCode::Dcom;
      op.name = word();
      comma();
      op.src_level = op.des_level = level();
      comma();
      op.src = number();
      comma();
      op.des = number();
      comma();
      op.len = number();
      if (peek() == ',') {
        ++pos_;
        op.param = word();
      }
    } else if (name == "mov") {
      op.code = OpCode::Mov;
      op.src_level = level();
      comma();
      op.src = number();
      comma();
      op.des_level = level();
      comma();
      op.des = number();
      comma();
      op.len = number();
    } else {
      pos_ = start;
      fail("unknown instruction '" + name + "'");
    }
    expect(')');
    return op;
  }

  Statement statement() {
    Statement st;
    if (accept("parallel")) {
      expect('{');
      st.parallel = true;
      st.ops.push_back(instr());
      while (peek() == ',') {
        ++pos_;
        st.ops.push_back(instr());
      }
      if (at_end()) fail("unbalanced 'parallel{': missing '}'");
      expect('}');
    } else {
      st.ops.push_back(instr());
    }
    if (!at_end()) fail("unexpected trailing text");
    return st;
  }

 private:
  std::string t_;
  int line_;
  size_t pos_ = 0;
};

std::vector<int64_t> parse_dims(const std::string& s, int line) {
  std::vector<int64_t> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stoll(part));
    } catch (...) {
      throw SyntaxError("bad dims '" + s + "'", line, 1);
    }
  }
  return out;
}

Binding parse_binding(std::istringstream& in, int line) {
  Binding b;
  std::string level, addr, dims;
  if (!(in >> b.name >> level >> addr >> dims)) throw SyntaxError("binding needs: name level addr dims", line, 1);
  LineParser lp(level, line);
  b.level = lp.level();
  try {
    b.addr = std::stoll(addr);
  } catch (...) {
    throw SyntaxError("bad address '" + addr + "'", line, 1);
  }
  b.dims = parse_dims(dims, line);
  return b;
}

}  // namespace

Flow parse_flow(const std::string& text) {
  Flow flow;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    size_t first = 0;
    while (first < s.size() && std::isspace(static_cast<unsigned char>(s[first]))) ++first;
    s = s.substr(first);
    if (s.empty() || s[0] == '#') continue;
    if (s[0] == '!') {
      std::istringstream d(s.substr(1));
      std::string key;
      d >> key;
      if (key == "arch") {
        d >> flow.arch_hash;
      } else if (key == "mode") {
        d >> flow.mode;
      } else if (key == "input") {
        flow.inputs.push_back(parse_binding(d, line));
      } else if (key == "output") {
        flow.outputs.push_back(parse_binding(d, line));
      } else if (key == "param") {
        std::string name;
        d >> name;
        std::string rest;
        std::getline(d, rest);
        try {
          flow.params.emplace_back(name, json::parse(rest));
        } catch (const json::parse_error& e) {
          throw SyntaxError("bad param JSON: " + std::string(e.what()), line, 1);
        }
      } else {
        throw SyntaxError("unknown directive '!" + key + "'", line, 1);
      }
      continue;
    }
    LineParser lp(s, line);
    flow.body.push_back(lp.statement());
  }
  return flow;
}

Flow load_flow(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open flow file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_flow(ss.str());
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  std::ostringstream s;
  for (unsigned i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return s.str();
}

std::string arch_hash(const HwSpec& hw) { return sha256_hex(arch_to_json(hw).dump()); }

// ---------------------------------------------------------------- access regions

namespace {

int64_t prod(const std::vector<int64_t>& d) {
  int64_t n = 1;
  for (auto v : d) n *= v;
  return n;
}

}  // namespace

Access op_access(const MetaOp& op, const Flow& flow, const HwSpec& hw, XbShapes& shapes) {
  Access a;
  const Level l1{op.core};
  switch (op.code) {
    case OpCode::ReadCore: {
      const json& p = flow.param(op.param);
      const auto in = p.at("in_dims").get<std::vector<int64_t>>();
      const auto out = p.at("out_dims").get<std::vector<int64_t>>();
      int64_t lo = -1, hi = -1;
      for (const auto& r : p.at("replicas"))
        if (r.at("core").get<int>() == op.core) {
          lo = r.at("oh")[0].get<int64_t>();
          hi = r.at("oh")[1].get<int64_t>();
        }
      if (lo < 0) throw SemanticError("read_core on core " + std::to_string(op.core) + " not in " + op.param);
      int64_t in_bytes = prod(in), out_bytes = prod(out);
      if (p.at("kind").get<std::string>() == "conv") {
        const int64_t C = in[0], H = in[1], W = in[2];
        const int64_t R = p.at("kernel")[2].get<int64_t>();
        const int64_t st = p.at("stride").get<int64_t>(), pad = p.at("padding").get<int64_t>();
        const int64_t ih0 = std::max<int64_t>(0, lo * st - pad);
        const int64_t ih1 = std::min<int64_t>(H, (hi - 1) * st - pad + R);
        in_bytes = std::max<int64_t>(0, ih1 - ih0) * W * C;
        out_bytes = (hi - lo) * out[0] * out[2];
      }
      a.reads.push_back({Level{}, op.src, op.src + in_bytes});
      a.writes.push_back({Level{}, op.des, op.des + out_bytes});
      break;
    }
    case OpCode::WriteCore:
      break;
    case OpCode::WriteXb:
    case OpCode::WriteRows: {
      const json& p = flow.param(op.param);
      const int64_t rows = p.at("rows")[1].get<int64_t>() - p.at("rows")[0].get<int64_t>();
      const int64_t cols = p.at("cols")[1].get<int64_t>() - p.at("cols")[0].get<int64_t>();
      auto& sh = shapes[{op.core, op.xb}];
      sh.cols = cols;
      sh.rows = op.code == OpCode::WriteXb ? rows : std::max<int64_t>(sh.rows, op.row_hi + 1);
      break;
    }
    case OpCode::ReadXb:
    case OpCode::ReadRows: {
      auto it = shapes.find({op.core, op.xb});
      if (it == shapes.end())
        throw UnwrittenCellError("read of crossbar (" + std::to_string(op.core) + "," + std::to_string(op.xb) +
                                 ") before any write");
      const int64_t rows = op.code == OpCode::ReadXb ? it->second.rows : op.row_hi - op.row_lo + 1;
      a.reads.push_back({l1, op.src, op.src + rows});
      a.writes.push_back({l1, op.des, op.des + it->second.cols * 4});
      break;
    }
    case OpCode::Dcom: {
      const Level lv = op.src_level;
      if (op.name == "relu") {
        a.reads.push_back({lv, op.src, op.src + op.len});
      } else if (op.name == "shift_acc") {
        int64_t bytes = 0;
        for (const auto& part : flow.param(op.param).at("parts")) bytes += part[2].get<int64_t>() * 4;
        a.reads.push_back({lv, op.src, op.src + bytes});
      } else if (op.name == "add") {
        const int64_t b = flow.param(op.param).at("src_b").get<int64_t>();
        a.reads.push_back({lv, op.src, op.src + op.len});
        a.reads.push_back({lv, b, b + op.len});
      } else if (op.name == "maxpool" || op.name == "avgpool") {
        const auto in = flow.param(op.param).at("in_dims").get<std::vector<int64_t>>();
        a.reads.push_back({lv, op.src, op.src + prod(in)});
      } else {
        throw SemanticError("unknown dcom function '" + op.name + "'");
      }
      a.writes.push_back({lv, op.des, op.des + op.len});
      break;
    }
    case OpCode::Mov:
      a.reads.push_back({op.src_level, op.src, op.src + op.len});
      a.writes.push_back({op.des_level, op.des, op.des + op.len});
      break;
  }
  (void)hw;
  return a;
}

// ---------------------------------------------------------------- static checks

namespace {

bool mode_allows(const std::string& mode, OpCode c) {
  const bool core_op = c == OpCode::ReadCore || c == OpCode::WriteCore;
  const bool xb_op = c == OpCode::ReadXb || c == OpCode::WriteXb;
  const bool row_op = c == OpCode::ReadRows || c == OpCode::WriteRows;
  if (mode == "cm") return !xb_op && !row_op;
  if (mode == "xbm") return !core_op && !row_op;
  if (mode == "wlm") return !core_op;
  return true;
}

void check_level(const Level& l, const HwSpec& hw, const std::string& where) {
  if (l.core >= hw.chip.core_number)
    throw SemanticError(where + ": level " + l.str() + " names a core outside 0.." +
                        std::to_string(hw.chip.core_number - 1));
}

void check_region(const Region& r, const HwSpec& hw, const std::string& where) {
  if (r.lo < 0) throw SemanticError(where + ": negative address");
  const Limit& size = r.level.is_l0() ? hw.chip.l0_size_bits : hw.core.l1_size_bits;
  if (size && r.hi * 8 > *size)
    throw SemanticError(where + ": " + r.level.str() + " address " + std::to_string(r.hi) + " beyond buffer size");
}

}  // namespace

void check_flow(const Flow& flow, const HwSpec& hw) {
  XbShapes shapes;
  int64_t idx = 0;
  for (const auto& st : flow.body) {
    ++idx;
    const std::string where = "statement " + std::to_string(idx);
    if (st.ops.empty()) throw SemanticError(where + ": empty statement");
    struct Tagged {
      Region r;
      size_t op;
      bool write;
    };
    std::vector<Tagged> regions;
    std::vector<std::pair<int, int>> xbs_used;
    for (size_t k = 0; k < st.ops.size(); ++k) {
      const MetaOp& op = st.ops[k];
      if (!mode_allows(flow.mode, op.code))
        throw SemanticError(where + ": " + to_string(op.code) + " not allowed in mode " + flow.mode);
      const bool uses_xb = op.code == OpCode::ReadXb || op.code == OpCode::WriteXb || op.code == OpCode::ReadRows ||
                           op.code == OpCode::WriteRows;
      const bool uses_core = uses_xb || op.code == OpCode::ReadCore || op.code == OpCode::WriteCore;
      if (uses_core && (op.core < 0 || op.core >= hw.chip.core_number))
        throw SemanticError(where + ": core " + std::to_string(op.core) + " out of range");
      if (uses_xb && (op.xb < 0 || op.xb >= hw.core.xb_number))
        throw SemanticError(where + ": crossbar " + std::to_string(op.xb) + " out of range");
      if (op.code == OpCode::ReadRows || op.code == OpCode::WriteRows) {
        if (op.row_lo < 0 || op.row_lo > op.row_hi || op.row_hi >= hw.xbar.xb_rows)
          throw SemanticError(where + ": rows " + std::to_string(op.row_lo) + ".." + std::to_string(op.row_hi) +
                              " outside crossbar");
        if (op.code == OpCode::ReadRows && op.row_hi - op.row_lo + 1 > hw.xbar.parallel_row)
          throw SemanticError(where + ": read_rows spans " + std::to_string(op.row_hi - op.row_lo + 1) +
                              " rows, parallel_row is " + std::to_string(hw.xbar.parallel_row));
      }
      if (op.code == OpCode::Mov || op.code == OpCode::Dcom) {
        check_level(op.src_level, hw, where);
        check_level(op.des_level, hw, where);
      }
      if (!op.param.empty()) (void)flow.param(op.param);
      Access acc;
      try {
        acc = op_access(op, flow, hw, shapes);
      } catch (const UnwrittenCellError& e) {
        throw SemanticError(where + ": " + e.what());
      } catch (const nlohmann::json::exception& e) {
        throw SemanticError(where + ": malformed parameter " + op.param + ": " + e.what());
      }
      for (const auto& r : acc.reads) {
        check_region(r, hw, where);
        regions.push_back({r, k, false});
      }
      for (const auto& r : acc.writes) {
        check_region(r, hw, where);
        regions.push_back({r, k, true});
      }
      if (uses_xb) xbs_used.push_back({op.core, op.xb});
    }
    if (!st.parallel) continue;
    std::sort(xbs_used.begin(), xbs_used.end());
    if (std::adjacent_find(xbs_used.begin(), xbs_used.end()) != xbs_used.end())
      throw SemanticError(where + ": two ops of one parallel block use the same crossbar");
    std::sort(regions.begin(), regions.end(), [](const Tagged& a, const Tagged& b) {
      return std::tie(a.r.level, a.r.lo) < std::tie(b.r.level, b.r.lo);
    });
    for (size_t i = 0; i < regions.size(); ++i)
      for (size_t j = i + 1; j < regions.size() && regions[j].r.level == regions[i].r.level &&
                             regions[j].r.lo < regions[i].r.hi;
           ++j) {
        if (regions[i].op == regions[j].op) continue;
        if (!regions[i].write && !regions[j].write) continue;
        if (regions[i].r.hi <= regions[i].r.lo || regions[j].r.hi <= regions[j].r.lo) continue;
        throw SemanticError(where + ": parallel ops " + std::to_string(regions[i].op) + " and " +
                            std::to_string(regions[j].op) + " overlap in " + regions[i].r.level.str());
      }
  }
}

FlowStats flow_stats(const Flow& flow) {
  FlowStats s;
  for (const auto& st : flow.body) {
    ++s.statements;
    if (st.parallel) ++s.parallel_blocks;
    for (const auto& op : st.ops) ++s.ops[op.code];
    const OpCode c = st.ops.front().code;
    if (c != OpCode::ReadCore && c != OpCode::ReadXb && c != OpCode::ReadRows) continue;
    if (std::all_of(st.ops.begin(), st.ops.end(), [&](const MetaOp& o) { return o.code == c; }))
      ++s.read_blocks[{c, static_cast<int64_t>(st.ops.size())}];
  }
  return s;
}

}  // namespace cim

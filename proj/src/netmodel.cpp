#include "gridsense/netmodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

namespace gridsense {

namespace {

constexpr double kPi = std::numbers::pi;

struct CaseRow {
  int line = 0;
  std::vector<double> values;
};

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_number(std::string_view tok, int line) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw ParseError("invalid number '" + std::string(tok) + "'", line);
  return v;
}

int as_int(double v, int line, const char* what) {
  if (v != std::floor(v) || std::abs(v) > 1e9)
    throw ParseError(std::string(what) + " must be an integer", line);
  return static_cast<int>(v);
}

// Shortest decimal s with strtod(s) / base == x, so that parsing the written
// file reproduces the per-unit value exactly.
std::string scaled_repr(double x, double base) {
  char buf[64];
  double y = x * base;
  for (int attempt = 0; attempt < 16; ++attempt) {
    for (int digits = 6; digits <= 17; ++digits) {
      std::snprintf(buf, sizeof buf, "%.*g", digits, y);
      if (std::strtod(buf, nullptr) / base == x) return buf;
    }
    // Step y toward the value that divides back to x.
    y = (std::strtod(buf, nullptr) / base < x) ? std::nextafter(y, HUGE_VAL)
                                              : std::nextafter(y, -HUGE_VAL);
  }
  throw Error("cannot represent per-unit value exactly at this base");
}

std::string repr(double x) {
  char buf[64];
  for (int digits = 6; digits <= 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

}  // namespace

std::string_view to_string(BusKind kind) {
  switch (kind) {
    case BusKind::slack: return "slack";
    case BusKind::generator: return "generator";
    case BusKind::load: return "load";
  }
  return "unknown";
}

CMatrix build_ybus(int n, const std::vector<Branch>& branches, const std::vector<Bus>& buses) {
  CMatrix y = CMatrix::Zero(n, n);
  for (const auto& br : branches) {
    if (br.r == 0.0 && br.x == 0.0) throw ValidationError("branch with zero series impedance");
    const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
    const std::complex<double> t = std::polar(br.tap, br.shift_deg * kPi / 180.0);
    const std::complex<double> ytt = ys + std::complex<double>(0.0, br.b_shunt / 2.0);
    y(br.from, br.from) += ytt / (t * std::conj(t));
    y(br.to, br.to) += ytt;
    y(br.from, br.to) += -ys / std::conj(t);
    y(br.to, br.from) += -ys / t;
  }
  for (const auto& b : buses) y(b.id, b.id) += std::complex<double>(b.shunt_g, b.shunt_b);
  return y;
}

CMatrix build_zbus(const CMatrix& ybus, bool* pseudo) {
  Eigen::FullPivLU<CMatrix> lu(ybus);
  lu.setThreshold(1e-10);
  if (lu.isInvertible()) {
    if (pseudo) *pseudo = false;
    return lu.inverse();
  }
  if (pseudo) *pseudo = true;
  Eigen::JacobiSVD<CMatrix> svd(ybus, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cutoff = 1e-10 * (s.size() > 0 ? s(0) : 0.0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cutoff) inv(i) = 1.0 / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
}

PowerNetwork PowerNetwork::build(std::string name, double base_mva, std::vector<Bus> buses,
                                 std::vector<Branch> branches) {
  if (!(base_mva > 0.0)) throw ValidationError("base MVA must be positive");
  if (buses.empty()) throw ValidationError("network has no buses");
  PowerNetwork net;
  net.name_ = std::move(name);
  net.base_mva_ = base_mva;
  const int n = static_cast<int>(buses.size());
  for (int i = 0; i < n; ++i) {
    const auto& b = buses[i];
    if (b.id != i) throw ValidationError("bus indices must be contiguous from 0");
    if (b.kind == BusKind::slack) {
      if (net.slack_ >= 0) throw ValidationError("more than one slack bus");
      net.slack_ = i;
    }
    if (b.base_load_p < 0.0)
      throw ValidationError("negative active load at bus " + std::to_string(b.external_id));
    if (b.gen_capacity < 0.0)
      throw ValidationError("negative generation capacity at bus " + std::to_string(b.external_id));
  }
  if (net.slack_ < 0) throw ValidationError("no slack bus");
  std::vector<std::pair<int, int>> edges;
  for (const auto& br : branches) {
    if (br.from < 0 || br.to < 0 || br.from >= n || br.to >= n)
      throw ValidationError("branch endpoint out of range");
    if (br.from == br.to) throw ValidationError("branch connects a bus to itself");
    if (br.r == 0.0 && br.x == 0.0) throw ValidationError("branch with zero series impedance");
    if (!(br.tap > 0.0)) throw ValidationError("branch tap ratio must be positive");
    edges.emplace_back(br.from, br.to);
  }
  net.buses_ = std::move(buses);
  net.branches_ = std::move(branches);
  net.neighbors_ = make_adjacency(n, edges);
  net.adjacency_.assign(static_cast<std::size_t>(n) * n, 0);
  for (int u = 0; u < n; ++u)
    for (int v : net.neighbors_[u]) net.adjacency_[static_cast<std::size_t>(u) * n + v] = 1;
  net.components_ = connected_components(net.neighbors_);
  net.ybus_ = build_ybus(n, net.branches_, net.buses_);
  net.zbus_ = build_zbus(net.ybus_, &net.zbus_pinv_);
  return net;
}

bool PowerNetwork::adjacent(int u, int v) const {
  return adjacency_.at(static_cast<std::size_t>(u) * buses_.size() + v) != 0;
}

std::vector<int> PowerNetwork::buses_of_kind(BusKind kind) const {
  std::vector<int> out;
  for (const auto& b : buses_)
    if (b.kind == kind) out.push_back(b.id);
  return out;
}

PowerNetwork parse_case_text(std::string_view text, std::string_view origin) {
  enum class Section { none, bus, gen, branch };
  Section section = Section::none;
  std::string name(origin);
  std::optional<double> base;
  std::vector<CaseRow> bus_rows, gen_rows, branch_rows;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    const auto& head = tokens[0];
    if (head == "NAME") {
      if (tokens.size() != 2) throw ParseError("NAME takes one token", line_no);
      name = std::string(tokens[1]);
      continue;
    }
    if (head == "BASEMVA") {
      if (tokens.size() != 2) throw ParseError("BASEMVA takes one value", line_no);
      base = parse_number(tokens[1], line_no);
      if (!(*base > 0.0)) throw ParseError("BASEMVA must be positive", line_no);
      continue;
    }
    if (tokens.size() == 1 && (head == "BUS" || head == "GEN" || head == "BRANCH")) {
      section = head == "BUS" ? Section::bus : head == "GEN" ? Section::gen : Section::branch;
      continue;
    }
    CaseRow row{line_no, {}};
    for (auto tok : tokens) row.values.push_back(parse_number(tok, line_no));
    switch (section) {
      case Section::none: throw ParseError("data row outside a BUS/GEN/BRANCH section", line_no);
      case Section::bus:
        if (row.values.size() != 9) throw ParseError("BUS rows have 9 columns", line_no);
        bus_rows.push_back(std::move(row));
        break;
      case Section::gen:
        if (row.values.size() != 9) throw ParseError("GEN rows have 9 columns", line_no);
        gen_rows.push_back(std::move(row));
        break;
      case Section::branch:
        if (row.values.size() != 8) throw ParseError("BRANCH rows have 8 columns", line_no);
        branch_rows.push_back(std::move(row));
        break;
    }
  }
  if (!base) throw ParseError("missing BASEMVA", 0);
  if (bus_rows.empty()) throw ParseError("missing BUS section", 0);
  const double mva = *base;

  std::map<int, int> index_of;
  std::vector<Bus> buses;
  std::vector<int> file_type;
  for (const auto& row : bus_rows) {
    const auto& v = row.values;
    const int ext = as_int(v[0], row.line, "bus id");
    if (!index_of.emplace(ext, static_cast<int>(buses.size())).second)
      throw ValidationError("line " + std::to_string(row.line) + ": duplicate bus id " + std::to_string(ext));
    const int type = as_int(v[1], row.line, "bus type");
    if (type < 1 || type > 3)
      throw ValidationError("line " + std::to_string(row.line) + ": unsupported bus type " + std::to_string(type));
    Bus b;
    b.id = static_cast<int>(buses.size());
    b.external_id = ext;
    b.base_load_p = v[2] / mva;
    b.base_load_q = v[3] / mva;
    b.shunt_g = v[4] / mva;
    b.shunt_b = v[5] / mva;
    b.voltage_setpoint = v[6];
    buses.push_back(b);
    file_type.push_back(type);
  }

  std::vector<std::uint8_t> has_gen(buses.size(), 0);
  for (const auto& row : gen_rows) {
    const auto& v = row.values;
    const int ext = as_int(v[0], row.line, "generator bus");
    const auto it = index_of.find(ext);
    if (it == index_of.end())
      throw ValidationError("line " + std::to_string(row.line) + ": generator at unknown bus " + std::to_string(ext));
    if (v[6] <= 0.0) continue;  // out of service
    auto& b = buses[it->second];
    if (!has_gen[b.id]) b.voltage_setpoint = v[5];
    has_gen[b.id] = 1;
    b.gen_p += v[1] / mva;
    b.gen_capacity += v[7] / mva;
  }

  for (std::size_t i = 0; i < buses.size(); ++i) {
    auto& b = buses[i];
    switch (file_type[i]) {
      case 3: b.kind = BusKind::slack; break;
      case 2: b.kind = has_gen[i] ? BusKind::generator : BusKind::load; break;
      default: b.kind = BusKind::load; break;
    }
    if (b.kind == BusKind::load) b.voltage_setpoint = 1.0;
  }

  std::vector<Branch> branches;
  for (const auto& row : branch_rows) {
    const auto& v = row.values;
    if (v[7] <= 0.0) continue;  // out of service
    const int f = as_int(v[0], row.line, "branch from-bus");
    const int t = as_int(v[1], row.line, "branch to-bus");
    const auto fi = index_of.find(f), ti = index_of.find(t);
    if (fi == index_of.end() || ti == index_of.end())
      throw ValidationError("line " + std::to_string(row.line) + ": branch references unknown bus");
    if (fi->second == ti->second)
      throw ValidationError("line " + std::to_string(row.line) + ": branch connects a bus to itself");
    if (v[2] == 0.0 && v[3] == 0.0)
      throw ValidationError("line " + std::to_string(row.line) + ": branch with zero series impedance");
    Branch br;
    br.from = fi->second;
    br.to = ti->second;
    br.r = v[2];
    br.x = v[3];
    br.b_shunt = v[4];
    br.tap = v[5] == 0.0 ? 1.0 : v[5];
    br.shift_deg = v[6];
    branches.push_back(br);
  }
  return PowerNetwork::build(std::move(name), mva, std::move(buses), std::move(branches));
}

PowerNetwork parse_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open case file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_case_text(ss.str(), path.string());
}

std::string write_case(const PowerNetwork& net) {
  const double mva = net.base_mva();
  std::ostringstream out;
  out << "NAME " << net.name() << "\nBASEMVA " << repr(mva) << "\n\nBUS\n"
      << "# bus_i type Pd Qd Gs Bs Vm Va baseKV\n";
  for (const auto& b : net.buses()) {
    const int type = b.kind == BusKind::slack ? 3 : b.kind == BusKind::generator ? 2 : 1;
    out << b.external_id << ' ' << type << ' ' << scaled_repr(b.base_load_p, mva) << ' '
        << scaled_repr(b.base_load_q, mva) << ' ' << scaled_repr(b.shunt_g, mva) << ' '
        << scaled_repr(b.shunt_b, mva) << ' ' << repr(b.voltage_setpoint) << " 0 0\n";
  }
  out << "\nGEN\n# bus Pg Qg Qmax Qmin Vg status Pmax Pmin\n";
  for (const auto& b : net.buses()) {
    if (b.kind == BusKind::load && b.gen_p == 0.0 && b.gen_capacity == 0.0) continue;
    out << b.external_id << ' ' << scaled_repr(b.gen_p, mva) << " 0 0 0 " << repr(b.voltage_setpoint)
        << " 1 " << scaled_repr(b.gen_capacity, mva) << " 0\n";
  }
  out << "\nBRANCH\n# fbus tbus r x b ratio angle status\n";
  for (const auto& br : net.branches()) {
    out << net.bus(br.from).external_id << ' ' << net.bus(br.to).external_id << ' ' << repr(br.r)
        << ' ' << repr(br.x) << ' ' << repr(br.b_shunt) << ' ' << repr(br.tap) << ' '
        << repr(br.shift_deg) << " 1\n";
  }
  return out.str();
}

std::filesystem::path bundled_case_path(std::string_view name) {
  namespace fs = std::filesystem;
  const fs::path direct{std::string(name)};
  if (fs::is_regular_file(direct)) return direct;
  fs::path root;
  if (const char* env = std::getenv("GRIDSENSE_DATA_DIR"); env && *env) {
    root = env;
  } else {
#ifdef GRIDSENSE_DEFAULT_DATA_DIR
    root = GRIDSENSE_DEFAULT_DATA_DIR;
#else
    root = "data";
#endif
  }
  const std::string n(name);
  for (const auto& candidate : {root / "cases" / ("case" + n + ".case"), root / "cases" / (n + ".case"),
                                root / "cases" / n}) {
    if (fs::is_regular_file(candidate)) return candidate;
  }
  throw ConfigError("case not found: " + n);
}

}  // namespace gridsense

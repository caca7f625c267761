#include "fnc/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace fnc::io {

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw FormatError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw FormatError(where + ": unknown key \"" + key + "\"");
  }
}

double number(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw FormatError(where + ": missing \"" + key + "\"");
  const auto& v = obj.at(key);
  if (!v.is_number()) throw FormatError(where + "." + key + ": expected a number");
  return v.get<double>();
}

double number_or(const json& obj, const std::string& key, double fallback, const std::string& where) {
  return obj.contains(key) ? number(obj, key, where) : fallback;
}

ConcavePwa parse_pieces(const json& v, const std::string& where) {
  if (v.is_string() && v.get<std::string>() == "unbounded") return ConcavePwa::unbounded();
  if (!v.is_array() || v.empty()) throw FormatError(where + ": expected a list of [slope, intercept] pairs");
  std::vector<AffinePiece> pieces;
  for (const auto& p : v) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw FormatError(where + ": each piece must be [slope, intercept]");
    }
    pieces.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return ConcavePwa(std::move(pieces));
}

struct Defaults {
  double free_speed = NAN;
  double wave_speed = NAN;
  double lane_capacity = NAN;
  double lane_jam_density = NAN;
};

}  // namespace

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

double parse_ratio(const json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    const auto slash = s.find('/');
    double p = 0.0;
    double q = 1.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (slash == std::string::npos) {
      if (std::from_chars(b, e, p).ec == std::errc{}) return p;
    } else if (std::from_chars(b, b + slash, p).ec == std::errc{} &&
               std::from_chars(b + slash + 1, e, q).ec == std::errc{} && q != 0.0) {
      return p / q;
    }
  }
  throw FormatError(where + ": expected a number or a \"p/q\" fraction");
}

NetworkModel parse_network(const json& doc) {
  check_keys(doc, {"name", "description", "dt_seconds", "defaults", "cells", "links", "asymmetric", "merge_rule",
                   "priorities", "ramp_caps"},
             "network");
  const double dt_h = number(doc, "dt_seconds", "network") / 3600.0;

  Defaults def;
  if (doc.contains("defaults")) {
    const auto& d = doc.at("defaults");
    check_keys(d, {"free_speed", "wave_speed", "lane_capacity", "lane_jam_density"}, "defaults");
    def.free_speed = number_or(d, "free_speed", NAN, "defaults");
    def.wave_speed = number_or(d, "wave_speed", NAN, "defaults");
    def.lane_capacity = number_or(d, "lane_capacity", NAN, "defaults");
    def.lane_jam_density = number_or(d, "lane_jam_density", NAN, "defaults");
  }

  if (!doc.contains("cells") || !doc.at("cells").is_array()) throw FormatError("network: \"cells\" must be a list");
  std::map<std::string, std::size_t> index;
  const auto& jcells = doc.at("cells");
  for (std::size_t i = 0; i < jcells.size(); ++i) {
    const auto where = "cells[" + std::to_string(i) + "]";
    if (!jcells[i].is_object() || !jcells[i].contains("name") || !jcells[i].at("name").is_string()) {
      throw FormatError(where + ": missing \"name\"");
    }
    if (!index.emplace(jcells[i].at("name").get<std::string>(), i).second) {
      throw FormatError(where + ": duplicate cell name");
    }
  }
  auto lookup = [&](const json& v, const std::string& where) {
    if (!v.is_string()) throw FormatError(where + ": expected a cell name");
    const auto it = index.find(v.get<std::string>());
    if (it == index.end()) throw FormatError(where + ": unknown cell \"" + v.get<std::string>() + "\"");
    return it->second;
  };

  std::vector<Link> links;
  std::vector<bool> has_pred(jcells.size(), false);
  if (doc.contains("links")) {
    if (!doc.at("links").is_array()) throw FormatError("network: \"links\" must be a list");
    for (std::size_t k = 0; k < doc.at("links").size(); ++k) {
      const auto& l = doc.at("links")[k];
      const auto where = "links[" + std::to_string(k) + "]";
      check_keys(l, {"from", "to", "beta"}, where);
      Link link{cell_id(lookup(l.at("from"), where + ".from")), cell_id(lookup(l.at("to"), where + ".to")),
                l.contains("beta") ? parse_ratio(l.at("beta"), where + ".beta") : 1.0};
      has_pred[idx(link.to)] = true;
      links.push_back(link);
    }
  }

  std::vector<Cell> cells;
  for (std::size_t i = 0; i < jcells.size(); ++i) {
    const auto& c = jcells[i];
    const auto where = "cells[" + std::to_string(i) + "]";
    check_keys(c, {"name", "length_km", "lanes", "free_speed", "wave_speed", "lane_capacity", "lane_jam_density",
                   "demand", "supply", "capacity_drop"},
               where);
    Cell cell;
    cell.name = c.at("name").get<std::string>();
    cell.length_km = number(c, "length_km", where);
    cell.lanes = static_cast<int>(number_or(c, "lanes", 1, where));
    if (cell.lanes < 1) throw FormatError(where + ".lanes: must be >= 1");
    const double v = number_or(c, "free_speed", def.free_speed, where);
    const double w = number_or(c, "wave_speed", def.wave_speed, where);
    const double F = number_or(c, "lane_capacity", def.lane_capacity, where);
    const double jam = number_or(c, "lane_jam_density", def.lane_jam_density, where);

    if (c.contains("demand")) {
      cell.fd.demand = parse_pieces(c.at("demand"), where + ".demand");
    } else {
      if (std::isnan(v) || std::isnan(F)) throw FormatError(where + ": no demand and no free_speed/lane_capacity");
      cell.fd.demand = ConcavePwa::triangular_demand(v, F * cell.lanes);
    }
    if (c.contains("supply")) {
      cell.fd.supply = parse_pieces(c.at("supply"), where + ".supply");
    } else if (!has_pred[i]) {
      cell.fd.supply = ConcavePwa::unbounded();
    } else {
      if (std::isnan(w) || std::isnan(F) || std::isnan(jam)) {
        throw FormatError(where + ": no supply and incomplete wave_speed/lane_capacity/lane_jam_density");
      }
      cell.fd.supply = ConcavePwa::triangular_supply(F * cell.lanes, jam * cell.lanes, w);
    }
    if (c.contains("capacity_drop")) {
      const auto& cd = c.at("capacity_drop");
      check_keys(cd, {"critical_density", "drop_fraction"}, where + ".capacity_drop");
      cell.fd.capacity_drop = CapacityDrop{number(cd, "critical_density", where + ".capacity_drop"),
                                           number(cd, "drop_fraction", where + ".capacity_drop")};
    }
    cells.push_back(std::move(cell));
  }

  std::vector<AsymmetricJunction> asym;
  if (doc.contains("asymmetric")) {
    for (std::size_t k = 0; k < doc.at("asymmetric").size(); ++k) {
      const auto& a = doc.at("asymmetric")[k];
      const auto where = "asymmetric[" + std::to_string(k) + "]";
      check_keys(a, {"onramp", "mainline", "downstream"}, where);
      asym.push_back({cell_id(lookup(a.at("onramp"), where + ".onramp")),
                      cell_id(lookup(a.at("mainline"), where + ".mainline")),
                      cell_id(lookup(a.at("downstream"), where + ".downstream"))});
    }
  }

  MergeModel merge;
  if (doc.contains("merge_rule")) {
    const auto r = doc.at("merge_rule").get<std::string>();
    if (r == "controlled") merge.rule = MergeRule::Controlled;
    else if (r == "proportional") merge.rule = MergeRule::ProportionalPriority;
    else if (r == "daganzo") merge.rule = MergeRule::DaganzoPriority;
    else throw FormatError("merge_rule: expected controlled, proportional or daganzo");
  }
  if (doc.contains("priorities")) {
    if (!doc.at("priorities").is_object()) throw FormatError("priorities: expected an object keyed by cell name");
    for (const auto& [name, list] : doc.at("priorities").items()) {
      const auto j = lookup(json(name), "priorities");
      merge.priorities[j] = list.get<std::vector<double>>();
    }
  }

  std::map<std::size_t, double> caps;
  if (doc.contains("ramp_caps")) {
    if (!doc.at("ramp_caps").is_object()) throw FormatError("ramp_caps: expected an object keyed by cell name");
    for (const auto& [name, cap] : doc.at("ramp_caps").items()) {
      if (!cap.is_number()) throw FormatError("ramp_caps." + name + ": expected a number");
      caps[lookup(json(name), "ramp_caps")] = cap.get<double>();
    }
  }
  return NetworkModel(std::move(cells), std::move(links), dt_h, std::move(asym), std::move(merge), std::move(caps));
}

NetworkModel load_network(const std::filesystem::path& path) {
  try {
    return parse_network(read_json(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::size_t cell_index(const NetworkModel& net, std::string_view name) {
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (net.cell(i).name == name) return i;
  }
  throw FormatError("unknown cell \"" + std::string(name) + "\"");
}

std::size_t duration_to_steps(std::string_view text, double dt_hours) {
  double value = 0.0;
  const char* b = text.data();
  const char* e = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(b, e, value);
  if (ec != std::errc{} || ptr == b || value < 0.0) {
    throw std::invalid_argument("cannot read duration \"" + std::string(text) + "\"");
  }
  const std::string_view unit(ptr, static_cast<std::size_t>(e - ptr));
  double hours = 0.0;
  if (unit.empty()) {
    if (value != std::floor(value)) throw std::invalid_argument("a bare duration is a whole number of steps");
    return static_cast<std::size_t>(value);
  } else if (unit == "s" || unit == "sec") {
    hours = value / 3600.0;
  } else if (unit == "min" || unit == "m") {
    hours = value / 60.0;
  } else if (unit == "h") {
    hours = value;
  } else {
    throw std::invalid_argument("unknown time unit \"" + std::string(unit) + "\" (use s, min or h)");
  }
  const double steps = hours / dt_hours;
  const double rounded = std::round(steps);
  if (std::abs(steps - rounded) > 1e-9 * std::max(1.0, steps)) {
    std::ostringstream os;
    os << "duration " << text << " is not a multiple of the sampling time (" << dt_hours * 3600.0 << " s)";
    throw std::invalid_argument(os.str());
  }
  return static_cast<std::size_t>(rounded);
}

void write_trajectory_csv(std::ostream& os, const NetworkModel& net, const Trajectory& tr) {
  os << "t,cell,rho,phi\n";
  os << std::setprecision(17);
  const auto T = tr.horizon();
  for (std::size_t t = 0; t <= T; ++t) {
    for (std::size_t e = 0; e < tr.cells(); ++e) {
      os << t << ',' << net.cell(e).name << ',' << tr.rho(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(t))
         << ',';
      if (t < T) os << tr.phi(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(t));
      os << '\n';
    }
  }
}

json trajectory_summary(const Trajectory& tr) {
  return {{"tts_hours", tr.tts},
          {"steps", tr.horizon()},
          {"dt_seconds", tr.dt * 3600.0},
          {"violations",
           {{"demand_clamps", tr.count(EventKind::DemandClamp)},
            {"supply_scalings", tr.count(EventKind::SupplyScale)},
            {"asymmetric_violations", tr.count(EventKind::AsymmetricViolation)},
            {"mainline_floors", tr.count(EventKind::MainlineFloor)}}}};
}

void write_contour_csv(std::ostream& os, const Trajectory& tr) {
  os << "t,cell_position_km,density\n";
  if (tr.rho.size() == 0) return;
  os << std::setprecision(17);
  std::vector<double> pos(tr.cells(), 0.0);
  for (std::size_t e = 1; e < tr.cells(); ++e) pos[e] = pos[e - 1] + tr.lengths[static_cast<Eigen::Index>(e - 1)];
  for (Eigen::Index t = 0; t < tr.rho.cols(); ++t) {
    for (std::size_t e = 0; e < tr.cells(); ++e) {
      os << t << ',' << pos[e] << ',' << tr.rho(static_cast<Eigen::Index>(e), t) << '\n';
    }
  }
}

Mat read_contour_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "t,cell_position_km,density") {
    throw FormatError("contour file: unexpected header");
  }
  struct Row {
    std::size_t t;
    double pos;
    double rho;
  };
  std::vector<Row> rows;
  std::size_t max_t = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Row r{};
    char c1 = 0;
    char c2 = 0;
    if (!(ls >> r.t >> c1 >> r.pos >> c2 >> r.rho) || c1 != ',' || c2 != ',') {
      throw FormatError("contour file: malformed row \"" + line + "\"");
    }
    max_t = std::max(max_t, r.t);
    rows.push_back(r);
  }
  if (rows.empty()) return Mat(0, 0);
  const auto steps = max_t + 1;
  if (rows.size() % steps != 0) throw FormatError("contour file: ragged grid");
  const auto n = rows.size() / steps;
  Mat rho(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(steps));
  std::vector<std::size_t> seen(steps, 0);
  for (const auto& r : rows) {
    if (seen[r.t] >= n) throw FormatError("contour file: too many cells at step " + std::to_string(r.t));
    rho(static_cast<Eigen::Index>(seen[r.t]++), static_cast<Eigen::Index>(r.t)) = r.rho;
  }
  return rho;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace fnc::io

#include "arbproj/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "arbproj/error.hpp"

namespace arbproj {

namespace {

using json = nlohmann::ordered_json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view field, std::size_t line) {
  double v = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (field.empty() || ec != std::errc() || ptr != last) {
    throw ParseError(line, "expected a number, got '" + std::string(field) + "'");
  }
  return v;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json violations_json(const ArbitrageReport& report, const NormalizedSurface& surface) {
  json arr = json::array();
  for (const auto& v : report.violations) {
    json o;
    o["kind"] = std::string(to_string(v.kind));
    if (v.kind != ViolationKind::lp_infeasible && v.node.maturity < surface.smiles.size()) {
      const auto& s = surface.smiles[v.node.maturity];
      o["maturity_index"] = v.node.maturity;
      o["strike_index"] = v.node.strike;
      o["maturity_years"] = s.maturity;
      o["strike"] = v.strike * s.forward;
      o["k"] = v.strike;
      o["magnitude"] = v.magnitude;
      o["magnitude_currency"] = v.magnitude * s.forward * s.discount;
      if (v.kind == ViolationKind::calendar) {
        o["later_maturity_index"] = v.other;
        o["later_maturity_years"] = surface.smiles[v.other].maturity;
      }
    } else {
      o["magnitude"] = v.magnitude;
    }
    arr.push_back(std::move(o));
  }
  return arr;
}

json report_object(const ArbitrageReport& report, const NormalizedSurface& surface) {
  json o;
  o["feasible"] = report.feasible;
  o["lp_stage_run"] = report.stage2_run;
  o["lp_kmax"] = report.kmax;
  o["violation_count"] = report.violations.size();
  o["violations"] = violations_json(report, surface);
  return o;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::io, "write to '" + path.string() + "' failed");
}

NormalizedSurface parse_surface_csv(std::string_view content) {
  NormalizedSurface surface;
  std::size_t line_no = 0;
  bool header = false;
  std::size_t start = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    const auto line = trim(content.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!header) {
      if (line != "maturity_years,k,c,vol") {
        throw ParseError(line_no, "expected header 'maturity_years,k,c,vol'");
      }
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 4) throw ParseError(line_no, "expected 4 fields");
    const double t = parse_double(f[0], line_no);
    const double k = parse_double(f[1], line_no);
    double c = 0.0;
    if (!f[2].empty()) {
      c = parse_double(f[2], line_no);
    } else if (!f[3].empty()) {
      c = bs_call_price(k, parse_double(f[3], line_no), t);
    } else {
      throw ParseError(line_no, "either c or vol is required");
    }
    if (surface.smiles.empty() || !same_maturity(surface.smiles.back().maturity, t)) {
      if (!surface.smiles.empty() && t < surface.smiles.back().maturity) {
        throw ParseError(line_no, "rows must be grouped by increasing maturity");
      }
      Smile s;
      s.maturity = t;
      surface.smiles.push_back(std::move(s));
    }
    auto& s = surface.smiles.back();
    if (!s.strikes.empty() && !(k > s.strikes.back())) throw ParseError(line_no, "strikes must increase");
    s.strikes.push_back(k);
    s.prices.push_back(c);
  }
  if (surface.smiles.empty()) throw Error(ErrorCode::empty_input, "surface file has no data rows");
  surface.validate();
  return surface;
}

NormalizedSurface load_surface(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  const auto first = trim(std::string_view(content).substr(0, content.find('\n')));
  if (first.starts_with("maturity_years,strike")) {
    const auto quotes = parse_quotes(content);
    return normalize(quotes, fit_curve(quotes));
  }
  return parse_surface_csv(content);
}

std::string surface_csv(const NormalizedSurface& surface, const VolGrid& vols) {
  std::string out = "maturity_years,k,c,vol\n";
  for (std::size_t i = 0; i < surface.smiles.size(); ++i) {
    const auto& s = surface.smiles[i];
    for (std::size_t j = 0; j < s.size(); ++j) {
      out += format_number(s.maturity) + ',' + format_number(s.strikes[j]) + ',' + format_number(s.prices[j]) + ',';
      if (i < vols.size() && j < vols[i].size() && vols[i][j]) out += format_number(*vols[i][j]);
      out += '\n';
    }
  }
  return out;
}

std::string surface_csv(const NormalizedSurface& surface) {
  VolGrid vols;
  for (const auto& s : surface.smiles) {
    auto& row = vols.emplace_back();
    for (std::size_t j = 0; j < s.size(); ++j) row.push_back(vol_or_none(s.strikes[j], s.prices[j], s.maturity));
  }
  return surface_csv(surface, vols);
}

std::string measure_csv(const Eigen::VectorXd& measure, const Theta& theta, std::size_t m) {
  const PathIndexer idx(theta.size(), m);
  std::string out = "path_index";
  for (std::size_t i = 1; i <= m; ++i) out += ",k_" + std::to_string(i);
  out += ",weight\n";
  for (std::size_t p = 0; p < idx.paths(); ++p) {
    out += std::to_string(p + 1);
    for (std::size_t i = 0; i < m; ++i) out += ',' + format_number(theta.strikes[idx.atom(p, i)]);
    out += ',' + format_number(measure[static_cast<Eigen::Index>(p)]) + '\n';
  }
  return out;
}

std::string marginals_csv(const RepairResult& result, const NormalizedSurface& surface) {
  std::string out = "period,maturity_years,k,nu,mu\n";
  for (std::size_t i = 0; i < result.periods; ++i) {
    const auto nu = extract_marginal(result.nu.nu, result.theta.size(), result.periods, i);
    for (std::size_t a = 0; a < result.theta.size(); ++a) {
      out += std::to_string(i + 1) + ',' + format_number(surface.smiles[i].maturity) + ',' +
             format_number(result.theta.strikes[a]) + ',' + format_number(nu[a]) + ',' +
             format_number(result.marginals[i][a]) + '\n';
    }
  }
  return out;
}

std::string history_csv(std::span<const HistoryRow> history) {
  std::string out = "n,substep,E,primal_kl,duality_gap\n";
  for (const auto& h : history) {
    out += std::to_string(h.n) + ',' + std::to_string(h.substep) + ',' + format_number(h.criterion) + ',' +
           format_number(h.primal_kl) + ',' + format_number(h.duality_gap) + '\n';
  }
  return out;
}

std::string sweep_csv(std::span<const SweepRow> rows, std::optional<double> lp_value) {
  std::string out = "epsilon,cost,criterion,iterations,converged,error\n";
  for (const auto& r : rows) {
    std::string err = r.error;
    for (char& ch : err) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    out += format_number(r.epsilon) + ',' + (r.error.empty() ? format_number(r.cost) : std::string()) + ',' +
           (r.error.empty() ? format_number(r.criterion) : std::string()) + ',' + std::to_string(r.iterations) +
           ',' + (r.converged ? "1" : "0") + ',' + err + '\n';
  }
  if (lp_value) out += "lp," + format_number(*lp_value) + ",0,,1,\n";
  return out;
}

std::string report_json(const ArbitrageReport& report, const NormalizedSurface& surface) {
  return report_object(report, surface).dump(2) + '\n';
}

std::string repair_report_json(const RepairResult& result, const RepairConfig& config,
                               const NormalizedSurface& input) {
  json o;
  json cfg;
  cfg["mode"] = std::string(to_string(config.mode));
  cfg["epsilon"] = config.epsilon;
  cfg["e_tol"] = config.e_tol;
  cfg["kmax_margin"] = config.kmax_margin;
  cfg["shift"] = config.shift;
  cfg["max_iters"] = config.max_iters;
  json marks = json::array();
  for (const auto& mk : config.calibration_marks) marks.push_back(json::array({mk.maturity, mk.strike}));
  cfg["calibration_marks"] = marks;
  o["config"] = cfg;

  json grid;
  grid["kmax"] = result.kmax;
  grid["atoms"] = result.theta.size();
  grid["periods"] = result.periods;
  grid["paths"] = result.mu.size();
  grid["alpha"] = result.nu.alpha;
  o["grid"] = grid;

  json sol;
  sol["objective"] = result.objective;
  sol["transport_cost"] = result.transport_cost;
  if (config.mode == RepairMode::entropic) {
    sol["iterations"] = result.sinkhorn.iterations;
    sol["converged"] = result.sinkhorn.converged;
    sol["criterion"] = result.sinkhorn.criterion;
    sol["duality_gap"] = result.duality_gap;
  } else {
    sol["lp_iterations"] = result.lp_iterations;
  }
  sol["polish_change"] = result.polish_change;
  o["solution"] = sol;

  json nodes = json::array();
  for (std::size_t i = 0; i < input.smiles.size(); ++i) {
    const auto& s = input.smiles[i];
    const auto& r = result.repaired.smiles[i];
    for (std::size_t j = 0; j < s.size(); ++j) {
      json n;
      n["maturity_index"] = i;
      n["strike_index"] = j;
      n["maturity_years"] = s.maturity;
      n["strike"] = s.strikes[j] * s.forward;
      n["k"] = s.strikes[j];
      n["c_before"] = s.prices[j];
      n["c_after"] = r.prices[j];
      n["price_change_currency"] = (r.prices[j] - s.prices[j]) * s.forward * s.discount;
      n["vol_before"] = optional_number(result.vols_before[i][j]);
      n["vol_after"] = optional_number(result.vols_after[i][j]);
      nodes.push_back(std::move(n));
    }
  }
  o["nodes"] = nodes;
  o["before"] = report_object(result.before, input);
  o["after"] = report_object(result.after, result.repaired);
  return o.dump(2) + '\n';
}

StressScenario parse_scenario_json(std::string_view content, std::size_t maturities) {
  json doc;
  try {
    doc = json::parse(content);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse, std::string("scenario JSON: ") + e.what());
  }
  StressScenario sc;
  sc.bands.resize(maturities);
  try {
    if (doc.contains("bands")) {
      for (const auto& b : doc.at("bands")) {
        StressBand band{b.at("k_lo").get<double>(), b.at("k_hi").get<double>(), b.at("vol_multiplier").get<double>()};
        if (b.contains("maturity_index")) {
          const auto i = b.at("maturity_index").get<std::size_t>();
          if (i >= maturities) {
            throw Error(ErrorCode::index, "scenario band maturity_index " + std::to_string(i) + " but the surface has " +
                                              std::to_string(maturities) + " maturities");
          }
          sc.bands[i].push_back(band);
        } else {
          for (auto& per : sc.bands) per.push_back(band);
        }
      }
    }
    if (doc.contains("calibration_marks")) {
      for (const auto& mk : doc.at("calibration_marks")) {
        sc.calibration_marks.push_back({mk.at(0).get<std::size_t>(), mk.at(1).get<std::size_t>()});
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("scenario JSON: ") + e.what());
  }
  sc.validate();
  return sc;
}

std::vector<NodeIndex> parse_marks(std::string_view text) {
  std::vector<NodeIndex> out;
  if (trim(text).empty()) return out;
  for (auto item : split(text, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) throw Error(ErrorCode::parse, "calibration mark must look like i:j");
    std::size_t i = 0;
    std::size_t j = 0;
    const auto a = trim(item.substr(0, colon));
    const auto b = trim(item.substr(colon + 1));
    const auto ra = std::from_chars(a.data(), a.data() + a.size(), i);
    const auto rb = std::from_chars(b.data(), b.data() + b.size(), j);
    if (ra.ec != std::errc() || rb.ec != std::errc() || ra.ptr != a.data() + a.size() ||
        rb.ptr != b.data() + b.size()) {
      throw Error(ErrorCode::parse, "calibration mark must look like i:j");
    }
    out.push_back({i, j});
  }
  return out;
}

}  // namespace arbproj

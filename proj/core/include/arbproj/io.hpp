#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "arbproj/constraints.hpp"
#include "arbproj/entropic.hpp"
#include "arbproj/grid.hpp"
#include "arbproj/market_data.hpp"
#include "arbproj/repair.hpp"

namespace arbproj {

/// printf "%.12g".
std::string format_number(double v);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Parses `maturity_years,k,c,vol`. An empty c is computed from vol; forward
/// and discount are set to 1.
NormalizedSurface parse_surface_csv(std::string_view content);

/// Loads either a raw quote file (normalized through the parity fit) or a
/// surface file, chosen by the header.
NormalizedSurface load_surface(const std::filesystem::path& path);

using VolGrid = std::vector<std::vector<std::optional<double>>>;

/// `maturity_years,k,c,vol`; vol left empty when not defined.
std::string surface_csv(const NormalizedSurface& surface, const VolGrid& vols);
std::string surface_csv(const NormalizedSurface& surface);

/// `path_index,k_1,...,k_m,weight`, 1-based path index.
std::string measure_csv(const Eigen::VectorXd& measure, const Theta& theta, std::size_t m);

/// `period,maturity_years,k,nu,mu`: signed input marginal and repaired marginal.
std::string marginals_csv(const RepairResult& result, const NormalizedSurface& surface);

/// `n,substep,E,primal_kl,duality_gap`.
std::string history_csv(std::span<const HistoryRow> history);

/// `epsilon,cost,criterion,iterations,converged,error`, plus an `lp` row when given.
std::string sweep_csv(std::span<const SweepRow> rows, std::optional<double> lp_value);

std::string report_json(const ArbitrageReport& report, const NormalizedSurface& surface);
std::string repair_report_json(const RepairResult& result, const RepairConfig& config,
                               const NormalizedSurface& input);

/// {"bands":[{"maturity_index":0,"k_lo":..,"k_hi":..,"vol_multiplier":..}],
///  "calibration_marks":[[i,j],...]}. Bands without maturity_index apply to
/// every maturity.
StressScenario parse_scenario_json(std::string_view content, std::size_t maturities);

/// "i:j,i:j" list of 0-based node indices.
std::vector<NodeIndex> parse_marks(std::string_view text);

}  // namespace arbproj

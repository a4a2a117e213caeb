#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "htomo/core.hpp"
#include "htomo/doppler.hpp"

namespace htomo::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 1;
inline constexpr int exit_numerical = 2;

/// Bad command line or configuration; maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs one subcommand. args excludes the program name. The summary line goes to
/// `out`, diagnostics and usage text to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct PlotColumn {
  std::string name;
  std::vector<double> values;
};

/// CSV with one column per entry; columns must have equal length. No rows gives
/// the header line alone.
void emit_plot_csv(const std::filesystem::path& path, const std::vector<PlotColumn>& columns);
/// 8-bit graymap of a 2D grid, min..max stretched to 0..255.
void emit_plot_pgm(const std::filesystem::path& path, const ScalarGrid& image);

struct Probe {
  Vec3 point{0.0, 0.0, 0.0};
  double value = 0.0;
};

/// doppler-recon settings. JSON keys (all optional, unknown keys rejected):
/// grid, half_width, sigma, radius, directions, offsets, bins, lambda, lambda_l2,
/// fit_tolerance, tau_det, min_conditioning, support_fraction, fill_fraction,
/// max_degenerate_fraction, kroner_order, probe {point: [x, y, z], value}.
struct DopplerConfig {
  std::size_t grid = 24;
  double half_width = 1.0;
  double sigma = 0.5;
  double radius = 0.95;
  std::size_t directions = 60;
  std::size_t offsets = 40;
  std::size_t bins = 512;
  DopplerOptions options;
  std::optional<Probe> probe;
};

/// Throws UsageError on malformed JSON, unknown keys, wrong types or bad values.
DopplerConfig parse_doppler_config(const std::string& json_text);

/// max over rays |moment_sinogram(hist_radon(f), k) - radon(f^k)| / max |radon(f^k)|,
/// one entry per k = 1..kmax, bins spanning the range of f.
std::vector<double> moment_identity_errors(const ScalarGrid& f, std::size_t angles, std::size_t offsets,
                                           double half_width, std::size_t bins, int kmax);

/// Pushforward of the annulus 1 - w/2 < |x| < 1 + w/2 (scaled by 1 / w) under
/// x -> x . Theta, by polar midpoint sampling binned on [-1, 1]. Returns the
/// largest relative deviation of the bin densities from oracle_circle_delta at
/// bin midpoints with |p| <= p_max.
double annulus_pushforward_error(double width, std::size_t bins, double p_max, double theta);

/// Plane integrals of a narrow Gaussian tube around the x3 axis (width sigma) over
/// `count` random planes with |Theta_3| >= 0.3; largest relative deviation from
/// oracle_line_delta_plane_transform.
double line_delta_plane_error(std::uint64_t seed, std::size_t count, double sigma);

struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass() const { return value <= tolerance; }
};

/// The oracle and moment-identity checks run by `selftest`.
std::vector<CheckResult> selftest_checks(std::uint64_t seed);

}  // namespace htomo::cli

#pragma once

#include <filesystem>
#include <vector>

#include "htomo/core.hpp"
#include "htomo/radon.hpp"

namespace htomo {

/// Sub-level indicators of one field: masks[k] is 1 where f < levels[k], else 0.
/// Levels ascend and the masks nest: masks[k] <= masks[k + 1].
struct LevelStack {
  std::vector<double> levels;
  std::vector<ScalarGrid> masks;

  std::size_t size() const { return levels.size(); }
  void validate() const;
};

/// Per-ray length of { f < edges[k + 1] }: underflow plus the masses of bins 0..k.
Sinogram sublevel_sinogram(const HistogramSinogram& hs, std::size_t k);
/// Per-ray length of { f >= edges[k + 1] }: masses of bins k+1.. plus overflow.
Sinogram superlevel_sinogram(const HistogramSinogram& hs, std::size_t k);
/// Per-ray chord length inside the grid box.
Sinogram chord_sinogram(const HistogramSinogram& hs);

/// Filtered backprojection thresholded at 0.5.
ScalarGrid reconstruct_level(const Sinogram& sino, const GridSpec& out);

/// One mask per bin edge above the first (levels = edges[1..n]). Each mask is the
/// complement of the reconstructed super-level set, which is compactly supported
/// when the field vanishes near the box boundary. Nesting is enforced.
LevelStack reconstruct_stack(const HistogramSinogram& hs, const GridSpec& out);

/// Cumulative OR from the lowest level up. Returns the number of samples changed.
std::size_t enforce_nesting(LevelStack& stack);

/// Layer-cake sum y_min + sum_k (levels[k] - levels[k-1]) (1 - masks[k]) with
/// levels[-1] = y_min. Non-nested input is repaired first and a warning is issued.
ScalarGrid assemble(const LevelStack& stack, double y_min);

struct CriticalPointOptions {
  /// A ray peaks near y_c when the heaviest bin within bin_window of y_c exceeds
  /// this multiple of the ray's median non-zero bin mass and is no lighter than
  /// the bins just outside the window.
  double peak_ratio = 2.0;
  /// Bins either side of the bin holding y_c searched for a peak.
  int bin_window = 1;
  /// Candidates need a backprojected score of at least this fraction of the angle count.
  double score_fraction = 0.5;
};

/// Unfiltered backprojection of the indicator "this ray's histogram peaks near y_c".
ScalarGrid critical_point_score(const HistogramSinogram& hs, double y_c, const GridSpec& out,
                                const CriticalPointOptions& opt = {});

/// Score-weighted centroids of the connected regions scoring at least
/// score_fraction * (number of angles), strongest first.
std::vector<Vec3> locate_critical_points(const HistogramSinogram& hs, double y_c, const GridSpec& out,
                                         const CriticalPointOptions& opt = {});

/// level_NNNN.htgd per mask plus levels.csv in `dir`.
void write_level_stack(const std::filesystem::path& dir, const LevelStack& stack);
LevelStack read_level_stack(const std::filesystem::path& dir);

}  // namespace htomo

#ifndef NTC_ORACLES_HPP
#define NTC_ORACLES_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ntc/sources.hpp"
#include "ntc/tensor.hpp"

namespace ntc {

struct RdPoint {
  double rate = 0;        // bits per source vector
  double distortion = 0;  // squared error per source vector
  double lambda = 0;
  std::string label;
  // Per-sample second moments for Monte-Carlo error bars (n = 0 means the
  // numbers are closed form).
  double n = 0;
  double rate_var = 0;
  double dist_var = 0;
  double rd_cov = 0;
  double meta = 0;  // method-specific (truncated mass, out-of-cell fraction, ...)

  double lagrangian() const { return rate + lambda * distortion; }
  double rate_se() const { return n > 0 ? std::sqrt(rate_var / n) : 0.0; }
  double dist_se() const { return n > 0 ? std::sqrt(dist_var / n) : 0.0; }
  double lagrangian_se(double lam) const {
    if (n <= 0) return 0.0;
    double v = rate_var + lam * lam * dist_var + 2 * lam * rd_cov;
    return std::sqrt(std::max(v, 0.0) / n);
  }
};

// Transform-independent description of an operational quantizer. Cells map
// to symbols; symbols carry codevectors and coding probabilities. In 1-D the
// cells are the intervals between interior boundaries (the outermost cells
// extend to infinity); in 2-D a label grid over a bounding box.
struct QuantizerDescription {
  int dimension = 1;

  // 1-D
  std::vector<double> boundaries;     // interior, strictly increasing
  std::vector<int32_t> cell_symbol;   // boundaries.size() + 1 entries

  // 2-D
  int64_t grid_resolution = 0;
  double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
  std::vector<int32_t> grid_labels;   // row-major [res x res]

  std::vector<double> codevectors;    // [symbols x dimension]
  std::vector<double> pmf;            // [symbols], sums to 1

  int64_t symbol_count() const { return static_cast<int64_t>(pmf.size()); }
  void validate() const;
  int32_t locate_1d(double x) const;          // cell index by binary search
  int32_t locate_2d(double x, double y, bool* outside = nullptr) const;
};

// Optimal entropy-constrained scalar quantizer of the standard Laplace
// source under squared error: equal-width outer bins, a separate center bin,
// centroid codevectors, cell-probability entropy model. The two-parameter
// family is searched by a coarse scan plus nested golden sections.
struct SullivanResult {
  QuantizerDescription desc;
  RdPoint point;       // closed-form rate/distortion of the optimum
  double outer_width = 0;
  double center_halfwidth = 0;
};
SullivanResult sullivan_ecsq(double lambda);

// Closed-form Lagrangian of the family member (delta, c); used by the search
// and exposed for tests.
double sullivan_lagrangian(double lambda, double delta, double center_halfwidth, double* rate_out,
                           double* distortion_out);

// ---- Blahut-Arimoto ----

struct BaGrid {
  std::vector<double> x1;  // grid coordinates, axis 1
  std::vector<double> x2;  // axis 2 (empty for 1-D)
  std::vector<double> pmf; // [x1] or row-major [x1 x x2], sums to 1
  double truncated_mass = 0;  // source mass outside the grid box
};

// Discretized source for the BA solver; extents hold all but ~1e-8 mass.
BaGrid ba_grid_for(const SourceSpec& spec, int points_per_axis);
BaGrid ba_grid_gaussian(double sigma, int points);

struct BaResult {
  RdPoint point;
  int iterations = 0;
  double gap = 0;  // final bound gap, nats
};

// Alternating-minimization solver for min over channels of R + lambda D on
// the discretized source; terminates when the standard bound gap drops below
// tol (nats). warm_start, when given, seeds and receives the reproduction
// marginal so sweeps can reuse it across lambda values.
BaResult blahut_arimoto(const BaGrid& grid, double lambda, int max_iterations, double tol,
                        std::vector<double>* warm_start = nullptr);

// ---- Monte-Carlo evaluation ----

RdPoint evaluate_quantizer(const QuantizerDescription& desc, const SourceSpec& source, int64_t n,
                           uint64_t seed);

}  // namespace ntc

#endif

#pragma once

// Trajectory divergence: the ego-speed feature map, fixed-width feature
// histograms, the integrated-absolute-difference path metric and the
// terminal pseudo-reward -alpha / (M + delta).

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/property_tree/ptree_fwd.hpp>

#include "fallback/mdp.hpp"

namespace fallback {

struct HistogramSpec {
  int bins = 30;
  double lo = 0.0;
  double hi = 30.0;

  double bin_width() const { return (hi - lo) / bins; }
  friend bool operator==(const HistogramSpec&, const HistogramSpec&) = default;
};

class FeatureHistogram {
 public:
  explicit FeatureHistogram(HistogramSpec spec = {});

  // Values are clamped into [lo, hi]; bins are half-open [lo_b, hi_b) except
  // the top bin, which also takes hi.
  void add(double value);
  void add(std::span<const double> values);
  void merge(const FeatureHistogram& other);

  const HistogramSpec& spec() const { return spec_; }
  int bin_of(double value) const;
  std::span<const std::uint64_t> counts() const { return counts_; }
  std::uint64_t total() const { return total_; }
  bool empty() const { return total_ == 0; }

  // count / (total * bin_width); throws std::logic_error when empty.
  double density(int bin) const;
  std::vector<double> densities() const;

 private:
  HistogramSpec spec_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct ShapingParams {
  double alpha = 1.0;
  double delta = 0.1;
  double difference_threshold = 1.1;  // d in the sufficiently-different test
};

std::optional<std::string> validate(const ShapingParams& p);
ShapingParams shaping_params_from_ptree(const boost::property_tree::ptree& section);
void shaping_params_to_ptree(const ShapingParams& p, boost::property_tree::ptree& section);

double phi(const Snapshot& s);
std::vector<double> phi(const Trajectory& traj);

FeatureHistogram histogram(std::span<const double> features, HistogramSpec spec = {});

// Sum_b |mu1(b) - mu2(b)| * bin_width, in [0, 2]. Throws std::invalid_argument
// on mismatched binning or an empty operand.
double metric(const FeatureHistogram& h1, const FeatureHistogram& h2);

// -alpha / (m + delta).
double pseudo_reward(double m, const ShapingParams& p);

bool sufficiently_different(double m, double d);

// Pooled histogram over a reference agent's most recent episodes.
struct ReferenceDistribution {
  int agent_id = -1;
  FeatureHistogram pooled;
  std::size_t episodes = 0;

  static ReferenceDistribution from_episodes(int agent_id,
                                             const std::deque<std::vector<double>>& episodes,
                                             HistogramSpec spec = {});
};

struct ShapingTerm {
  int reference_id = -1;
  double metric = 0.0;
  double reward = 0.0;
  bool skipped = false;  // reference had no completed episodes
};

struct ShapingResult {
  double total = 0.0;
  std::vector<ShapingTerm> terms;
};

// Sum over references of pseudo_reward(metric(histogram(phi(traj)), ref)).
ShapingResult shaping_total(const Trajectory& traj, std::span<const ReferenceDistribution> refs,
                            const ShapingParams& p);

// bin_lo, bin_hi, count, density
void write_histogram_csv(std::ostream& out, const FeatureHistogram& h);

}  // namespace fallback

#include "fallback/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <boost/property_tree/ptree.hpp>

#include "fallback/config_io.hpp"

namespace fallback {

FeatureHistogram::FeatureHistogram(HistogramSpec spec) : spec_(spec) {
  if (spec_.bins <= 0 || !(spec_.hi > spec_.lo)) {
    throw std::invalid_argument("histogram needs a positive bin count and hi > lo");
  }
  counts_.assign(static_cast<std::size_t>(spec_.bins), 0);
}

int FeatureHistogram::bin_of(double value) const {
  const double v = std::clamp(value, spec_.lo, spec_.hi);
  const int b = static_cast<int>(std::floor((v - spec_.lo) / spec_.bin_width()));
  return std::clamp(b, 0, spec_.bins - 1);
}

void FeatureHistogram::add(double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("non-finite feature value");
  ++counts_[static_cast<std::size_t>(bin_of(value))];
  ++total_;
}

void FeatureHistogram::add(std::span<const double> values) {
  for (double v : values) add(v);
}

void FeatureHistogram::merge(const FeatureHistogram& other) {
  if (!(other.spec_ == spec_)) throw std::invalid_argument("cannot merge histograms with different binning");
  for (std::size_t b = 0; b < counts_.size(); ++b) counts_[b] += other.counts_[b];
  total_ += other.total_;
}

double FeatureHistogram::density(int bin) const {
  if (empty()) throw std::logic_error("density of an empty histogram");
  return static_cast<double>(counts_.at(static_cast<std::size_t>(bin))) /
         (static_cast<double>(total_) * spec_.bin_width());
}

std::vector<double> FeatureHistogram::densities() const {
  std::vector<double> d(counts_.size());
  for (int b = 0; b < spec_.bins; ++b) d[static_cast<std::size_t>(b)] = density(b);
  return d;
}

std::optional<std::string> validate(const ShapingParams& p) {
  if (!(p.alpha >= 0.0) || !std::isfinite(p.alpha)) return "alpha must be non-negative";
  if (!(p.delta > 0.0 && p.delta < 1.0)) return "delta must lie in (0, 1)";
  if (!(p.difference_threshold >= 0.0)) return "difference threshold must be non-negative";
  return std::nullopt;
}

ShapingParams shaping_params_from_ptree(const config::Tree& s) {
  ShapingParams p;
  config::read_value(s, "alpha", p.alpha);
  config::read_value(s, "delta", p.delta);
  config::read_value(s, "difference_threshold", p.difference_threshold);
  if (auto problem = validate(p)) throw ConfigError("invalid shaping config: " + *problem);
  return p;
}

void shaping_params_to_ptree(const ShapingParams& p, config::Tree& s) {
  s.put("alpha", config::format_double(p.alpha));
  s.put("delta", config::format_double(p.delta));
  s.put("difference_threshold", config::format_double(p.difference_threshold));
}

double phi(const Snapshot& s) { return s.speed; }

std::vector<double> phi(const Trajectory& traj) {
  std::vector<double> f;
  f.reserve(traj.snapshots.size());
  for (const auto& s : traj.snapshots) f.push_back(phi(s));
  return f;
}

FeatureHistogram histogram(std::span<const double> features, HistogramSpec spec) {
  FeatureHistogram h(spec);
  h.add(features);
  return h;
}

double metric(const FeatureHistogram& h1, const FeatureHistogram& h2) {
  if (!(h1.spec() == h2.spec())) throw std::invalid_argument("metric: histograms use different binning");
  if (h1.empty() || h2.empty()) throw std::invalid_argument("metric: empty histogram");
  const double width = h1.spec().bin_width();
  double m = 0.0;
  for (int b = 0; b < h1.spec().bins; ++b) m += std::abs(h1.density(b) - h2.density(b)) * width;
  return m;
}

double pseudo_reward(double m, const ShapingParams& p) { return -p.alpha / (m + p.delta); }

bool sufficiently_different(double m, double d) { return m >= d; }

ReferenceDistribution ReferenceDistribution::from_episodes(
    int agent_id, const std::deque<std::vector<double>>& episodes, HistogramSpec spec) {
  ReferenceDistribution ref{agent_id, FeatureHistogram(spec), 0};
  for (const auto& e : episodes) {
    ref.pooled.add(e);
    ++ref.episodes;
  }
  return ref;
}

ShapingResult shaping_total(const Trajectory& traj, std::span<const ReferenceDistribution> refs,
                            const ShapingParams& p) {
  if (traj.snapshots.empty()) throw std::invalid_argument("shaping_total: empty trajectory");
  ShapingResult out;
  if (refs.empty()) return out;
  const std::vector<double> features = phi(traj);
  const FeatureHistogram own = histogram(features, refs.front().pooled.spec());
  for (const auto& ref : refs) {
    ShapingTerm term;
    term.reference_id = ref.agent_id;
    if (ref.pooled.empty()) {
      term.skipped = true;
    } else {
      term.metric = metric(own, ref.pooled);
      term.reward = pseudo_reward(term.metric, p);
      out.total += term.reward;
    }
    out.terms.push_back(term);
  }
  return out;
}

void write_histogram_csv(std::ostream& out, const FeatureHistogram& h) {
  out << "bin_lo,bin_hi,count,density\n";
  const auto& spec = h.spec();
  for (int b = 0; b < spec.bins; ++b) {
    const double lo = spec.lo + b * spec.bin_width();
    const double hi = spec.lo + (b + 1) * spec.bin_width();
    out << config::format_double(lo) << ',' << config::format_double(hi) << ','
        << h.counts()[static_cast<std::size_t>(b)] << ','
        << (h.empty() ? std::string("nan") : config::format_double(h.density(b))) << '\n';
  }
}

}  // namespace fallback

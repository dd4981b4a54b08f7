#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "heg/dataset.hpp"
#include "heg/error.hpp"
#include "heg/kb.hpp"
#include "heg/rng.hpp"
#include "heg/utf8.hpp"

namespace heg {

using Vec = std::vector<double>;

/// Sparse non-negative feature vector, sorted by index, no duplicate indices.
struct FeatureVector {
  std::vector<std::pair<std::uint32_t, double>> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }

  double norm() const {
    double s = 0.0;
    for (const auto& [i, w] : entries) s += w * w;
    return std::sqrt(s);
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

using FeatureCounts = std::map<std::uint32_t, double>;

inline FeatureVector normalized(const FeatureCounts& counts) {
  FeatureVector fv;
  double s = 0.0;
  for (const auto& [i, c] : counts) s += c * c;
  if (s == 0.0) return fv;
  const double inv = 1.0 / std::sqrt(s);
  fv.entries.reserve(counts.size());
  for (const auto& [i, c] : counts) {
    if (c != 0.0) fv.entries.emplace_back(i, c * inv);
  }
  return fv;
}

enum class TaskMode { Multilingual, Crosslingual };

inline std::string_view mode_name(TaskMode m) {
  return m == TaskMode::Multilingual ? "multilingual" : "crosslingual";
}

inline TaskMode parse_mode(std::string_view s) {
  if (s == "multilingual") return TaskMode::Multilingual;
  if (s == "crosslingual") return TaskMode::Crosslingual;
  throw Error(ErrorKind::ConfigError, "unknown task mode '" + std::string(s) + "'");
}

inline constexpr std::string_view kFallbackLanguage = "en";
inline constexpr char32_t kSpanOpen = 0xE000;
inline constexpr char32_t kSpanClose = 0xE001;

/// Label language used for an event: the mention's language in the
/// multilingual task (English when absent), always English crosslingually.
inline const std::string& label_language(const Event& event, const std::string& mention_language,
                                         TaskMode mode) {
  if (mode == TaskMode::Multilingual) {
    auto it = event.labels.find(mention_language);
    if (it != event.labels.end()) return it->first;
  }
  auto it = event.labels.find(std::string(kFallbackLanguage));
  if (it != event.labels.end()) return it->first;
  throw Error(ErrorKind::MissingLabel,
              "event " + event.id + " has no '" +
                  (mode == TaskMode::Multilingual ? mention_language + "' or '" : std::string{}) +
                  std::string(kFallbackLanguage) + "' label");
}

struct FeaturizerConfig {
  std::uint32_t feature_dim = 1u << 18;
  int min_n = 3;
  int max_n = 5;
  std::size_t max_context_chars = 128;
  std::size_t max_cand_chars = 128;
};

/// Hashed character n-gram featurizer (FNV-1a 64 of each n-gram's UTF-8
/// bytes, reduced mod feature_dim).
class Featurizer {
 public:
  explicit Featurizer(FeaturizerConfig cfg = {})
      : cfg_(cfg), empty_inputs_(std::make_shared<std::atomic<std::size_t>>(0)) {
    if (cfg_.feature_dim == 0 || cfg_.min_n < 1 || cfg_.max_n < cfg_.min_n) {
      throw Error(ErrorKind::InvalidConfig, "bad featurizer configuration");
    }
  }

  const FeaturizerConfig& config() const { return cfg_; }
  std::uint32_t dim() const { return cfg_.feature_dim; }

  /// Number of inputs that produced a zero vector so far.
  std::size_t empty_inputs() const { return empty_inputs_->load(); }

  std::uint32_t bucket(std::u32string_view gram) const {
    return static_cast<std::uint32_t>(fnv1a64(utf8::encode(gram)) % cfg_.feature_dim);
  }

  /// Raw n-gram counts of a code-point string. Strings shorter than min_n
  /// contribute themselves as a single feature.
  FeatureCounts counts(std::u32string_view text) const {
    FeatureCounts out;
    if (text.empty()) return out;
    if (text.size() < static_cast<std::size_t>(cfg_.min_n)) {
      out[bucket(text)] += 1.0;
      return out;
    }
    for (int n = cfg_.min_n; n <= cfg_.max_n; ++n) {
      const auto un = static_cast<std::size_t>(n);
      for (std::size_t i = 0; i + un <= text.size(); ++i) out[bucket(text.substr(i, un))] += 1.0;
    }
    return out;
  }

  /// The mention window: span wrapped in the reserved markers, with context
  /// on both sides up to max_context_chars code points in total (markers
  /// excluded). A span longer than the budget is cut to its prefix.
  std::u32string mention_window(const Mention& m) const {
    const auto cps = utf8::decode(m.context);
    if (!(m.span_start < m.span_end && m.span_end <= cps.size())) {
      throw Error(ErrorKind::InvalidMention, "mention " + m.id + " has an invalid span");
    }
    const std::size_t budget = cfg_.max_context_chars;
    if (budget == 0) return {};
    std::size_t span_len = m.span_end - m.span_start;
    std::size_t left = 0, right = 0;
    if (span_len >= budget) {
      span_len = budget;
    } else {
      const std::size_t rest = budget - span_len;
      const std::size_t left_avail = m.span_start;
      const std::size_t right_avail = cps.size() - m.span_end;
      left = std::min(left_avail, rest / 2);
      right = std::min(right_avail, rest - left);
      left = std::min(left_avail, rest - right);
    }
    std::u32string out;
    out.reserve(span_len + left + right + 2);
    out.append(cps, m.span_start - left, left);
    out.push_back(kSpanOpen);
    out.append(cps, m.span_start, span_len);
    out.push_back(kSpanClose);
    out.append(cps, m.span_end, right);
    return out;
  }

  FeatureCounts mention_counts(const Mention& m) const { return counts(mention_window(m)); }

  FeatureVector featurize_mention(const Mention& m) const {
    auto fv = normalized(mention_counts(m));
    if (fv.empty()) ++*empty_inputs_;
    return fv;
  }

  /// Title, then description when present, cut to max_cand_chars.
  std::u32string event_text(const Event& event, const std::string& language) const {
    auto it = event.labels.find(language);
    if (it == event.labels.end()) {
      throw Error(ErrorKind::MissingLabel, "event " + event.id + " has no '" + language + "' label");
    }
    std::string text = it->second.title;
    if (!it->second.description.empty()) text += " " + it->second.description;
    auto cps = utf8::decode(text);
    if (cps.size() > cfg_.max_cand_chars) cps.resize(cfg_.max_cand_chars);
    return cps;
  }

  FeatureCounts event_counts(const Event& event, const std::string& mention_language,
                             TaskMode mode) const {
    return counts(event_text(event, label_language(event, mention_language, mode)));
  }

  FeatureVector featurize_event(const Event& event, const std::string& mention_language,
                                TaskMode mode) const {
    auto fv = normalized(event_counts(event, mention_language, mode));
    if (fv.empty()) ++*empty_inputs_;
    return fv;
  }

 private:
  FeaturizerConfig cfg_;
  std::shared_ptr<std::atomic<std::size_t>> empty_inputs_;
};

enum class Tower { Mention, Event };

/// Two independent linear towers, F x d each, row-major.
struct EncoderParams {
  std::uint32_t feature_dim = 0;
  std::size_t dim = 0;
  Vec w_mention;
  Vec w_event;

  EncoderParams() = default;
  EncoderParams(std::uint32_t f, std::size_t d)
      : feature_dim(f), dim(d), w_mention(static_cast<std::size_t>(f) * d, 0.0),
        w_event(static_cast<std::size_t>(f) * d, 0.0) {}

  Vec& tower(Tower t) { return t == Tower::Mention ? w_mention : w_event; }
  const Vec& tower(Tower t) const { return t == Tower::Mention ? w_mention : w_event; }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

inline void init_uniform(Vec& v, Rng& rng, double scale) {
  for (auto& x : v) x = rng.uniform(-scale, scale);
}

inline Vec encode(const EncoderParams& params, const FeatureVector& fv, Tower tower) {
  const Vec& w = params.tower(tower);
  const std::size_t d = params.dim;
  Vec out(d, 0.0);
  for (const auto& [i, x] : fv.entries) {
    if (i >= params.feature_dim) {
      throw Error(ErrorKind::DimensionMismatch,
                  "feature index " + std::to_string(i) + " >= F=" + std::to_string(params.feature_dim));
    }
    const double* row = w.data() + static_cast<std::size_t>(i) * d;
    for (std::size_t k = 0; k < d; ++k) out[k] += x * row[k];
  }
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Bi-encoder similarity: the inner product of the two tower outputs.
inline double pair_score(std::span<const double> mention_vec, std::span<const double> event_vec) {
  return dot(mention_vec, event_vec);
}

}  // namespace heg

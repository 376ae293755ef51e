#include "hingenet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "hingenet/error.hpp"

namespace hingenet {
namespace eval {

namespace {

void check_sorted(const std::vector<double>& v, const char* what) {
  for (size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[i - 1]) throw_invalid(std::string(what) + " sequence is not sorted");
  }
}

// index of the reference beat nearest to t (ref non-empty)
size_t nearest_index(const std::vector<double>& ref, double t) {
  auto it = std::lower_bound(ref.begin(), ref.end(), t);
  if (it == ref.begin()) return 0;
  if (it == ref.end()) return ref.size() - 1;
  const size_t hi = static_cast<size_t>(it - ref.begin());
  return (t - ref[hi - 1] <= ref[hi] - t) ? hi - 1 : hi;
}

// local inter-annotation interval around index i
double local_interval(const std::vector<double>& ref, size_t i) {
  if (ref.size() < 2) return 0.0;
  if (i == 0) return ref[1] - ref[0];
  return ref[i] - ref[i - 1];
}

// total correct count and longest correct run under the continuity rule
std::pair<int64_t, int64_t> continuity_counts(const std::vector<double>& est,
                                              const std::vector<double>& ref, double theta) {
  const size_t n = est.size();
  int64_t total = 0, longest = 0, run = 0;
  bool prev_correct = false;
  for (size_t j = 0; j < n; ++j) {
    const size_t i = nearest_index(ref, est[j]);
    const double window = theta * local_interval(ref, i);
    bool correct = std::abs(est[j] - ref[i]) < window;
    if (correct && j > 0) {
      const double est_interval = est[j] - est[j - 1];
      const double ref_interval = local_interval(ref, i);
      correct = std::abs(est_interval - ref_interval) < theta * ref_interval && prev_correct;
    }
    prev_correct = correct;
    if (correct) {
      ++total;
      ++run;
      longest = std::max(longest, run);
    } else {
      run = 0;
    }
  }
  return {total, longest};
}

std::vector<std::vector<double>> reference_variations(const std::vector<double>& ref) {
  std::vector<std::vector<double>> out;
  out.push_back(ref);
  // offbeat: midpoints between adjacent reference beats
  std::vector<double> offbeat;
  for (size_t i = 0; i + 1 < ref.size(); ++i) offbeat.push_back(0.5 * (ref[i] + ref[i + 1]));
  if (offbeat.size() >= 2) out.push_back(std::move(offbeat));
  // double tempo: interleave with midpoints
  std::vector<double> dbl;
  for (size_t i = 0; i < ref.size(); ++i) {
    dbl.push_back(ref[i]);
    if (i + 1 < ref.size()) dbl.push_back(0.5 * (ref[i] + ref[i + 1]));
  }
  if (dbl.size() >= 2) out.push_back(std::move(dbl));
  // half tempo, both phases
  for (size_t phase = 0; phase < 2; ++phase) {
    std::vector<double> half;
    for (size_t i = phase; i < ref.size(); i += 2) half.push_back(ref[i]);
    if (half.size() >= 2) out.push_back(std::move(half));
  }
  return out;
}

}  // namespace

FScore f_measure(const std::vector<double>& est, const std::vector<double>& ref,
                 double tolerance) {
  check_sorted(est, "estimated");
  check_sorted(ref, "reference");
  FScore s;
  s.estimated = static_cast<int64_t>(est.size());
  s.reference = static_cast<int64_t>(ref.size());
  size_t i = 0, j = 0;
  while (i < est.size() && j < ref.size()) {
    const double d = est[i] - ref[j];
    if (std::abs(d) <= tolerance) {
      ++s.matched;
      ++i;
      ++j;
    } else if (d < 0.0) {
      ++i;
    } else {
      ++j;
    }
  }
  s.precision = s.estimated > 0 ? static_cast<double>(s.matched) / s.estimated : 0.0;
  s.recall = s.reference > 0 ? static_cast<double>(s.matched) / s.reference : 0.0;
  s.f = (s.precision + s.recall) > 0.0
            ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
            : 0.0;
  return s;
}

Continuity continuity(const std::vector<double>& est, const std::vector<double>& ref,
                      double theta) {
  if (ref.size() < 2) throw_invalid("continuity: need at least 2 reference beats");
  check_sorted(est, "estimated");
  check_sorted(ref, "reference");
  Continuity out;
  if (est.empty()) return out;

  const auto denom = [&](const std::vector<double>& variant) {
    return static_cast<double>(std::max(est.size(), variant.size()));
  };

  const auto [total, longest] = continuity_counts(est, ref, theta);
  out.cmlc = static_cast<double>(longest) / denom(ref);
  out.cmlt = static_cast<double>(total) / denom(ref);

  out.amlc = 0.0;
  out.amlt = 0.0;
  for (const auto& variant : reference_variations(ref)) {
    const auto [vt, vl] = continuity_counts(est, variant, theta);
    out.amlc = std::max(out.amlc, static_cast<double>(vl) / denom(variant));
    out.amlt = std::max(out.amlt, static_cast<double>(vt) / denom(variant));
  }
  return out;
}

MetricReport score_beats(const BeatSequence& est, const BeatSequence& ref, double tolerance,
                         double theta) {
  MetricReport r;
  r.f = f_measure(est.times, ref.times, tolerance);
  r.c = continuity(est.times, ref.times, theta);
  return r;
}

CorpusScore score_corpus(const std::vector<std::pair<std::string, std::string>>& pairs,
                         const std::string& csv_path, double tolerance, double theta) {
  if (pairs.empty()) throw_invalid("score_corpus: no items");
  CorpusScore out;
  double f = 0, p = 0, r = 0, cmlc = 0, cmlt = 0, amlc = 0, amlt = 0;
  for (const auto& [est_path, ref_path] : pairs) {
    CorpusItemScore item;
    item.item = est_path;
    try {
      const BeatSequence est = load_beats(est_path);
      const BeatSequence ref = load_beats(ref_path);
      item.report = score_beats(est, ref, tolerance, theta);
      item.ok = true;
    } catch (const Error& e) {
      item.ok = false;
      item.error = e.what();
    }
    if (item.ok) {
      ++out.scored;
      f += item.report.f.f;
      p += item.report.f.precision;
      r += item.report.f.recall;
      cmlc += item.report.c.cmlc;
      cmlt += item.report.c.cmlt;
      amlc += item.report.c.amlc;
      amlt += item.report.c.amlt;
    } else {
      ++out.excluded;
    }
    out.items.push_back(std::move(item));
  }
  if (out.scored > 0) {
    const double n = static_cast<double>(out.scored);
    out.mean.f.f = f / n;
    out.mean.f.precision = p / n;
    out.mean.f.recall = r / n;
    out.mean.c.cmlc = cmlc / n;
    out.mean.c.cmlt = cmlt / n;
    out.mean.c.amlc = amlc / n;
    out.mean.c.amlt = amlt / n;
  }

  if (!csv_path.empty()) {
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw_io("cannot open '" + csv_path + "' for writing");
    csv << "item,F,P,R,CMLc,CMLt,AMLc,AMLt\n";
    char line[256];
    for (const auto& item : out.items) {
      if (!item.ok) continue;
      std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                    item.item.c_str(), item.report.f.f, item.report.f.precision,
                    item.report.f.recall, item.report.c.cmlc, item.report.c.cmlt,
                    item.report.c.amlc, item.report.c.amlt);
      csv << line;
    }
    std::snprintf(line, sizeof(line), "mean,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  out.mean.f.f, out.mean.f.precision, out.mean.f.recall, out.mean.c.cmlc,
                  out.mean.c.cmlt, out.mean.c.amlc, out.mean.c.amlt);
    csv << line;
    if (!csv) throw_io("failed writing '" + csv_path + "'");
  }
  return out;
}

}  // namespace eval
}  // namespace hingenet

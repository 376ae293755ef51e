#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hingenet/postprocess.hpp"

namespace hingenet {
namespace eval {

struct FScore {
  double f = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  int64_t matched = 0;
  int64_t estimated = 0;
  int64_t reference = 0;
};

struct Continuity {
  double cmlc = 0.0;
  double cmlt = 0.0;
  double amlc = 0.0;
  double amlt = 0.0;
};

struct MetricReport {
  FScore f;
  Continuity c;
};

// One-to-one matching within the tolerance window (seconds, inclusive).
// The greedy sweep over the sorted sequences attains the maximum match count
// for interval tolerance matching; the tests verify this against brute-force
// bipartite matching.
FScore f_measure(const std::vector<double>& est, const std::vector<double>& ref,
                 double tolerance = 0.07);

// Continuity metrics at the correct metrical level (CML) and allowed metrical
// levels (AML: original, offbeat, double tempo, half tempo in both phases).
// A beat is correct when it falls within theta of the local reference
// interval around a reference beat, its own interval agrees within theta,
// and its predecessor is correct.
Continuity continuity(const std::vector<double>& est, const std::vector<double>& ref,
                      double theta = 0.175);

MetricReport score_beats(const BeatSequence& est, const BeatSequence& ref,
                         double tolerance = 0.07, double theta = 0.175);

struct CorpusItemScore {
  std::string item;
  bool ok = false;
  std::string error;
  MetricReport report;
};

struct CorpusScore {
  std::vector<CorpusItemScore> items;
  MetricReport mean;       // unweighted over scored items
  int64_t scored = 0;
  int64_t excluded = 0;
};

// Scores est/ref file pairs; items that fail to parse are recorded and
// excluded from the aggregate. Writes a CSV when csv_path is non-empty.
CorpusScore score_corpus(const std::vector<std::pair<std::string, std::string>>& pairs,
                         const std::string& csv_path = "", double tolerance = 0.07,
                         double theta = 0.175);

}  // namespace eval
}  // namespace hingenet

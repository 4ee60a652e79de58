#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fidmix/inference.hpp"
#include "fidmix/model.hpp"
#include "fidmix/rng.hpp"

namespace fidmix {

enum class DesignFamily { nested, crossed };

struct DesignEntry {
  std::string id;
  DesignFamily family = DesignFamily::nested;
  int i_count = 0;
  int j_count = 0;           // crossed designs only
  std::vector<int> j_i;      // nested designs only
  std::vector<int> k;        // cell counts; row-major I x J when crossed
  int n = 0;
  // Khuri imbalance measures as published; phi1 and phi2 are nested only.
  double phi = 1.0;
  double phi1 = 1.0;
  double phi2 = 1.0;

  ModelSpec build() const;
};

const std::vector<DesignEntry>& catalog();
const DesignEntry& find_design(const std::string& id);
// Nested layout shaped like the mouse blood-pH study: 15 dams, 37 sires.
const DesignEntry& table2_design();

struct ParameterSet {
  std::string id;
  DesignFamily family = DesignFamily::nested;
  std::vector<double> beta;
  std::vector<double> sigma2;  // one per random effect, error last

  ParameterVector truth() const;
};

const std::vector<ParameterSet>& parameter_sets();
const ParameterSet& find_parameter_set(const std::string& id);

// y = X beta + sum_i sigma_i V_i z_i with every z drawn from s, effect by
// effect and level by level.
std::vector<double> generate_data(const ModelSpec& spec, const ParameterVector& truth, RngStream& s);

struct StudyConfig {
  std::string design = "MI-3";
  std::string params = "PI-5";
  int reps = 300;
  int particles = 1000;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  double width = 0.0;  // 0 selects 0.01 * sqrt(sum of true variances)
  std::vector<CiKind> kinds{CiKind::two_sided, CiKind::lower, CiKind::upper};
  double threshold = 0.5;
  SelectionRule rule = SelectionRule::box;
  int threads = 0;
};

StudyConfig parse_study_config(const std::string& json_text);
std::string study_config_json(const StudyConfig& cfg);

struct StudyRow {
  std::string param;  // report label
  CiKind kind = CiKind::two_sided;
  double level = 0.95;
  double coverage = 0.0;
  double avg_length = 0.0;  // over finite intervals; nan when none are finite
  int reps = 0;             // replicates that produced intervals
  int failures = 0;
};

struct StudyReport {
  std::string design;
  std::string paramset;
  double width = 0.0;
  int reps = 0;
  int failures = 0;
  std::vector<StudyRow> rows;
  std::vector<std::string> warnings;
};

double default_width(const ParameterVector& truth);

// Runs cfg.reps replicates on the given model and truth; labels come from cfg.
StudyReport run_study(const ModelSpec& spec, const ParameterVector& truth, const StudyConfig& cfg);
// Resolves cfg.design and cfg.params through the catalog and parameter sets.
StudyReport run_study(const StudyConfig& cfg);

void write_study_report(const StudyReport& report, const std::filesystem::path& path);

struct OracleStats {
  long long draws = 0;
  long long accepted = 0;
  double rate() const { return draws > 0 ? static_cast<double>(accepted) / draws : 0.0; }
};

// Exact fiducial sample by simple rejection: complete latent vectors are drawn
// i.i.d. standard normal and kept when the full polyhedron is nonempty.
FiducialSample rejection_oracle(const ModelSpec& spec, const IntervalDataset& data, long long draws,
                                RngStream& s, int threads = 0, OracleStats* stats = nullptr);

}  // namespace fidmix

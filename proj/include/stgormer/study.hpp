#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stgormer/config.hpp"
#include "stgormer/data.hpp"

namespace stg {

enum class StudyAxis { Ablation, BlockCount, BlockOrder };

std::optional<StudyAxis> parse_study_axis(const std::string& name);

struct StudyVariant {
  std::string name;
  RunConfig config;
};

/// ablation: full, w/o t_in, w/o s_in, w/o SA_bias, w/o STMoE.
/// block_count: "S"*n + "T"*n for n = 1..4.
/// block_order: SSSTTT, STSTST, TTTSSS, TSTSTS.
std::vector<StudyVariant> study_variants(const RunConfig& base, StudyAxis axis);

struct StudyRow {
  std::string variant;
  MetricsReport metrics;  // test split, original scale
  int epochs = 0;
  std::size_t params = 0;
};

/// Trains every variant on the same data with the same seeds.
/// A failing variant is rethrown with its name prefixed.
std::vector<StudyRow> study(const RunConfig& base, StudyAxis axis, const FlowDataset& data);

/// Columns: variant,mae,rmse,mape,epochs,params
std::string study_csv(const std::vector<StudyRow>& rows);

}  // namespace stg

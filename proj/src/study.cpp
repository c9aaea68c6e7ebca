#include "stgormer/study.hpp"

#include <stdexcept>

#include "stgormer/io_util.hpp"
#include "stgormer/train.hpp"

namespace stg {

std::optional<StudyAxis> parse_study_axis(const std::string& name) {
  if (name == "ablation") return StudyAxis::Ablation;
  if (name == "block_count") return StudyAxis::BlockCount;
  if (name == "block_order") return StudyAxis::BlockOrder;
  return std::nullopt;
}

std::vector<StudyVariant> study_variants(const RunConfig& base, StudyAxis axis) {
  std::vector<StudyVariant> out;
  auto with = [&](std::string name, auto edit) {
    RunConfig c = base;
    edit(c.model);
    out.push_back({std::move(name), std::move(c)});
  };
  switch (axis) {
    case StudyAxis::Ablation:
      with("full", [](StgormerConfig&) {});
      with("w/o t_in", [](StgormerConfig& m) { m.use_t_in = false; });
      with("w/o s_in", [](StgormerConfig& m) { m.use_s_in = false; });
      with("w/o SA_bias", [](StgormerConfig& m) { m.use_sa_bias = false; });
      with("w/o STMoE", [](StgormerConfig& m) { m.use_moe = false; });
      break;
    case StudyAxis::BlockCount:
      for (std::size_t n = 1; n <= 4; ++n)
        with(std::string(n, 'S') + std::string(n, 'T'),
             [n](StgormerConfig& m) { m.block_order = std::string(n, 'S') + std::string(n, 'T'); });
      break;
    case StudyAxis::BlockOrder:
      for (const char* order : {"SSSTTT", "STSTST", "TTTSSS", "TSTSTS"})
        with(order, [order](StgormerConfig& m) { m.block_order = order; });
      break;
  }
  return out;
}

std::vector<StudyRow> study(const RunConfig& base, StudyAxis axis, const FlowDataset& data) {
  std::vector<StudyRow> rows;
  for (const auto& v : study_variants(base, axis)) {
    try {
      TrainedRun run = train_model(v.config, data);
      StudyRow row;
      row.variant = v.name;
      row.metrics = evaluate(run.model, run.data.raw_test, v.config.data.threshold);
      row.epochs = static_cast<int>(run.history.epochs.size());
      row.params = run.model.parameters().num_scalars();
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      throw std::runtime_error("variant '" + v.name + "': " + e.what());
    }
  }
  return rows;
}

std::string study_csv(const std::vector<StudyRow>& rows) {
  std::string out = "variant,mae,rmse,mape,epochs,params\n";
  for (const auto& r : rows)
    out += r.variant + "," + detail::format_double(r.metrics.mae) + "," + detail::format_double(r.metrics.rmse) + "," +
           detail::format_double(r.metrics.mape) + "," + std::to_string(r.epochs) + "," + std::to_string(r.params) + "\n";
  return out;
}

}  // namespace stg

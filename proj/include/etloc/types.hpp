#pragma once

#include <Eigen/Core>

#include <array>
#include <bitset>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace etloc {

// Dense 2-D maps are row-major Eigen arrays indexed (row = y, col = x).
template <typename Scalar>
using Map2 = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Heatmap = Map2<double>;
using BinaryMask = Map2<bool>;
// A square n x n boolean grid; the cells labeled as containing evidence.
using GridAnnotation = BinaryMask;

// The study label set. The order is the canonical label-major order used
// everywhere a per-label array appears.
enum class LabelId : std::uint8_t {
  AMC,
  Atelectasis,
  ECS,
  Consolidation,
  Edema,
  Fracture,
  LungLesion,
  Opacity,
  PleuralAbnormality,
  Pneumothorax,
};

inline constexpr int kNumLabels = 10;

inline constexpr std::array<LabelId, kNumLabels> kAllLabels = {
    LabelId::AMC,         LabelId::Atelectasis,        LabelId::ECS,
    LabelId::Consolidation, LabelId::Edema,            LabelId::Fracture,
    LabelId::LungLesion,  LabelId::Opacity,            LabelId::PleuralAbnormality,
    LabelId::Pneumothorax,
};

constexpr int index_of(LabelId label) { return static_cast<int>(label); }

std::string_view label_name(LabelId label);
// Accepts the display name ("Lung Lesion") and is case-insensitive.
std::optional<LabelId> parse_label(std::string_view name);
// Throws UnknownLabel.
LabelId label_from_name(std::string_view name);

// A set of study labels, e.g. the positive labels of one image.
using LabelSet = std::bitset<kNumLabels>;

}  // namespace etloc

#include "etloc/types.hpp"

#include <algorithm>
#include <cctype>

#include "etloc/error.hpp"

namespace etloc {

namespace {

constexpr std::array<std::string_view, kNumLabels> kNames = {
    "AMC",   "Atelectasis", "ECS",     "Consolidation",        "Edema",
    "Fracture", "Lung Lesion", "Opacity", "Pleural Abnormality", "Pneumothorax",
};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

std::string_view label_name(LabelId label) { return kNames[index_of(label)]; }

std::optional<LabelId> parse_label(std::string_view name) {
  for (LabelId label : kAllLabels) {
    if (iequals(name, label_name(label))) return label;
  }
  return std::nullopt;
}

LabelId label_from_name(std::string_view name) {
  if (auto label = parse_label(name)) return *label;
  throw UnknownLabel("'" + std::string(name) + "' is not a study label");
}

}  // namespace etloc

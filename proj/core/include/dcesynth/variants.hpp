#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dcesynth::training {

enum class Target { PC, SUB };
enum class Conditioning { pre_only, pre_plus_mask };
enum class LossKind { global, tumor_aware };

inline constexpr int kDefaultEpochs = 50;
inline constexpr int kLongEpochs = 100;

/// One model variant. The display name is a pure function of the other
/// fields: PC/SUB prefix, "-ROI" when mask input or tumor-aware loss is
/// used, and a suffix of (Vanilla), (M) or (L) with "100" appended for the
/// long schedule, e.g. "PC-ROI(M100)".
struct VariantSpec {
  Target target = Target::PC;
  Conditioning conditioning = Conditioning::pre_only;
  LossKind loss = LossKind::global;
  int epochs = kDefaultEpochs;

  std::string name() const;
  bool uses_mask_input() const { return conditioning == Conditioning::pre_plus_mask; }
  bool tumor_aware() const { return loss == LossKind::tumor_aware; }
  int in_channels() const { return uses_mask_input() ? 3 : 2; }

  friend bool operator==(const VariantSpec&, const VariantSpec&) = default;
};

/// Parses "SUB-ROI(L)" as well as the shell-friendly "SUB-ROI_L".
VariantSpec parse_variant(std::string_view name);

/// Full-breast ablation rows.
std::vector<VariantSpec> full_breast_variants();
/// Single-breast ablation rows.
std::vector<VariantSpec> single_breast_variants();

std::string_view to_string(Target target);

}  // namespace dcesynth::training

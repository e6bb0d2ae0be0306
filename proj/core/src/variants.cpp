#include "dcesynth/variants.hpp"

#include "dcesynth/error.hpp"

namespace dcesynth::training {

std::string_view to_string(Target target) { return target == Target::PC ? "PC" : "SUB"; }

std::string VariantSpec::name() const {
  if (epochs != kDefaultEpochs && epochs != kLongEpochs) {
    throw ContractError("variant epochs must be 50 or 100, got " + std::to_string(epochs));
  }
  std::string out(to_string(target));
  std::string suffix;
  if (uses_mask_input()) suffix += "M";
  if (tumor_aware()) suffix += "L";
  if (suffix.empty()) {
    suffix = "Vanilla";
  } else {
    out += "-ROI";
  }
  if (epochs == kLongEpochs) suffix += "100";
  return out + "(" + suffix + ")";
}

VariantSpec parse_variant(std::string_view raw) {
  std::string text(raw);
  // "SUB-ROI_L" -> "SUB-ROI(L)"
  if (auto us = text.find('_'); us != std::string::npos && text.find('(') == std::string::npos) {
    text = text.substr(0, us) + "(" + text.substr(us + 1) + ")";
  }
  const auto open = text.find('(');
  if (open == std::string::npos || text.back() != ')') {
    throw ConfigError("malformed variant name '" + std::string(raw) + "'");
  }
  const std::string head = text.substr(0, open);
  std::string suffix = text.substr(open + 1, text.size() - open - 2);

  VariantSpec v;
  bool roi = false;
  if (head == "PC" || head == "SUB") {
    v.target = head == "PC" ? Target::PC : Target::SUB;
  } else if (head == "PC-ROI" || head == "SUB-ROI") {
    v.target = head == "PC-ROI" ? Target::PC : Target::SUB;
    roi = true;
  } else {
    throw ConfigError("unknown variant prefix in '" + std::string(raw) + "'");
  }
  if (suffix.size() > 3 && suffix.ends_with("100")) {
    v.epochs = kLongEpochs;
    suffix.resize(suffix.size() - 3);
  }
  if (suffix == "Vanilla" && !roi) {
    return v;
  }
  if (!roi || suffix.empty()) throw ConfigError("unknown variant suffix in '" + std::string(raw) + "'");
  for (char c : suffix) {
    if (c == 'M') {
      v.conditioning = Conditioning::pre_plus_mask;
    } else if (c == 'L') {
      v.loss = LossKind::tumor_aware;
    } else {
      throw ConfigError("unknown variant suffix in '" + std::string(raw) + "'");
    }
  }
  if (v.name() != text) throw ConfigError("non-canonical variant name '" + std::string(raw) + "'");
  return v;
}

std::vector<VariantSpec> full_breast_variants() {
  return {
      parse_variant("PC(Vanilla)"),   parse_variant("PC(Vanilla100)"), parse_variant("PC-ROI(M)"),
      parse_variant("PC-ROI(M100)"),  parse_variant("PC-ROI(L)"),      parse_variant("SUB(Vanilla)"),
      parse_variant("SUB-ROI(L)"),
  };
}

std::vector<VariantSpec> single_breast_variants() {
  return {parse_variant("PC(Vanilla)"), parse_variant("PC-ROI(L)"), parse_variant("SUB(Vanilla)"),
          parse_variant("SUB-ROI(L)")};
}

}  // namespace dcesynth::training

#pragma once

#include "chaincal/model.hpp"

#include <Eigen/Core>

#include <array>
#include <random>
#include <string>
#include <vector>

namespace chaincal {

enum class Field { A = 0, D = 1, Alpha = 2, Offset = 3 };

inline constexpr std::array<Field, 4> kAllFields = {Field::A, Field::D, Field::Alpha, Field::Offset};

std::string_view field_name(Field f);
Field parse_field_name(std::string_view name);
double& field_ref(DHLink& link, Field f);
double field_value(const DHLink& link, Field f);
bool is_length(Field f);

/// One scalar DH entry. Shared head links are owned by the left eye chain.
struct ParameterEntry {
  ChainId chain = ChainId::LeftArm;
  std::size_t link = 0;  // 0-based
  Field field = Field::A;
  bool free = false;

  /// e.g. "LA[4].a" (1-based link numbers, as in the DH tables).
  std::string label() const;
  bool operator==(const ParameterEntry&) const = default;
};

/**
 * Free/frozen flag for every DH scalar of the model, exactly once each.
 *
 * Entry order: LA links, RA links, LEye links (1-4 are the shared head),
 * REye links 5-6; within a link a, d, alpha, offset.
 */
struct ParameterMask {
  std::vector<ParameterEntry> entries;

  std::size_t free_count() const;
  std::vector<std::size_t> free_entry_indices() const;
  /// Labels of the free entries, in packed order.
  std::vector<std::string> free_labels() const;
  /// Chains with at least one free entry (a free shared-head entry counts for both eyes).
  bool touches(ChainId chain) const;

  bool operator==(const ParameterMask&) const = default;
};

/// Packed free parameters; mixed units (mm for a/d, rad for alpha/offset).
using ParameterVector = Eigen::VectorXd;

struct ChainFieldSelection {
  ChainId chain = ChainId::LeftArm;
  std::array<bool, 4> fields{};
};

struct EntryOverride {
  ChainId chain = ChainId::LeftArm;
  std::size_t link = 0;  // 0-based
  Field field = Field::A;
  bool free = false;
};

/**
 * Which chains and fields to calibrate.
 *
 * Text form: items separated by ';', each `chain:fields` where chain is LA,
 * RA, LEye, REye or `all` and fields is `all` or a comma list of a, d, alpha,
 * offset. Entry overrides take the form `LA[4].a=frozen` or `LA[8].alpha=free`.
 * Example: "LA:all;REye:offset;LA[5].d=frozen".
 */
struct MaskSelection {
  std::vector<ChainFieldSelection> chains;
  std::vector<EntryOverride> overrides;

  static MaskSelection parse(std::string_view text);
  std::string to_string() const;
};

/// Every DH scalar of the model, all frozen.
ParameterMask mask_layout(const RobotModel& model);

/**
 * Free entries = selection minus the always-frozen set: the first (Root) link
 * of every chain and alpha of the last arm link. Overrides are applied last.
 */
ParameterMask default_mask(const RobotModel& model, const MaskSelection& selection);

ParameterVector pack(const RobotModel& model, const ParameterMask& mask);

/// Writes the packed values into a copy of `model`; shared head entries go to both eyes.
RobotModel unpack(const RobotModel& model, const ParameterMask& mask, const ParameterVector& values);

/// Perturbation added for a uniform draw u in [-1, 1] at factor p.
/// offset: p/100 * u rad; alpha: p/1000 * u rad; a, d: 0.1 * p * u mm.
double perturbation_delta(Field field, double p, double u);

/// Adds perturbation_delta(field, p, U[-1,1]) to every free entry.
RobotModel perturb(const RobotModel& model, const ParameterMask& mask, double p, std::mt19937_64& rng);

}  // namespace chaincal

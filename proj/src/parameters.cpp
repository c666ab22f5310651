#include "chaincal/parameters.hpp"

#include "chaincal/error.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <charconv>

namespace chaincal {

std::string_view field_name(Field f) {
  switch (f) {
    case Field::A: return "a";
    case Field::D: return "d";
    case Field::Alpha: return "alpha";
    case Field::Offset: return "offset";
  }
  return "?";
}

Field parse_field_name(std::string_view name) {
  if (name == "a") return Field::A;
  if (name == "d") return Field::D;
  if (name == "alpha") return Field::Alpha;
  if (name == "offset" || name == "offsets") return Field::Offset;
  throw ConfigError(fmt::format("unknown DH field '{}' (expected a, d, alpha or offset)", name));
}

double& field_ref(DHLink& link, Field f) {
  switch (f) {
    case Field::A: return link.a;
    case Field::D: return link.d;
    case Field::Alpha: return link.alpha;
    case Field::Offset: return link.offset;
  }
  throw Error("invalid field");
}

double field_value(const DHLink& link, Field f) { return field_ref(const_cast<DHLink&>(link), f); }

bool is_length(Field f) { return f == Field::A || f == Field::D; }

std::string ParameterEntry::label() const {
  return fmt::format("{}[{}].{}", chain_name(chain), link + 1, field_name(field));
}

std::size_t ParameterMask::free_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const ParameterEntry& e) { return e.free; }));
}

std::vector<std::size_t> ParameterMask::free_entry_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].free) out.push_back(i);
  }
  return out;
}

std::vector<std::string> ParameterMask::free_labels() const {
  std::vector<std::string> out;
  for (const ParameterEntry& e : entries) {
    if (e.free) out.push_back(e.label());
  }
  return out;
}

bool ParameterMask::touches(ChainId chain) const {
  for (const ParameterEntry& e : entries) {
    if (!e.free) continue;
    if (e.chain == chain) return true;
    if (chain == ChainId::RightEye && e.chain == ChainId::LeftEye && e.link < kSharedHeadLinks) return true;
  }
  return false;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t pos = s.find(sep, start);
    const std::size_t end = pos == std::string_view::npos ? s.size() : pos;
    out.push_back(trim(s.substr(start, end - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Maps a (chain, link) pair to the owner of that entry in the mask layout.
std::pair<ChainId, std::size_t> owner_of(ChainId chain, std::size_t link) {
  if (chain == ChainId::RightEye && link < kSharedHeadLinks) return {ChainId::LeftEye, link};
  return {chain, link};
}

EntryOverride parse_override(std::string_view item) {
  // LA[4].a=frozen
  const std::size_t lb = item.find('[');
  const std::size_t rb = item.find(']');
  const std::size_t dot = item.find('.', rb == std::string_view::npos ? 0 : rb);
  const std::size_t eq = item.find('=');
  if (lb == std::string_view::npos || rb == std::string_view::npos || dot == std::string_view::npos ||
      eq == std::string_view::npos || !(lb < rb && rb < dot && dot < eq)) {
    throw ConfigError(fmt::format("malformed entry override '{}' (expected e.g. LA[4].a=frozen)", item));
  }
  EntryOverride o;
  o.chain = parse_chain_name(trim(item.substr(0, lb)));
  const std::string_view num = trim(item.substr(lb + 1, rb - lb - 1));
  std::size_t link = 0;
  const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), link);
  if (ec != std::errc() || ptr != num.data() + num.size() || link == 0) {
    throw ConfigError(fmt::format("bad link number in override '{}' (links are numbered from 1)", item));
  }
  o.link = link - 1;
  o.field = parse_field_name(trim(item.substr(dot + 1, eq - dot - 1)));
  const std::string_view state = trim(item.substr(eq + 1));
  if (state == "free") {
    o.free = true;
  } else if (state == "frozen") {
    o.free = false;
  } else {
    throw ConfigError(fmt::format("override '{}' must end in =free or =frozen", item));
  }
  return o;
}

}  // namespace

MaskSelection MaskSelection::parse(std::string_view text) {
  MaskSelection sel;
  for (std::string_view item : split(text, ';')) {
    if (item.empty()) continue;
    if (item.find('=') != std::string_view::npos) {
      sel.overrides.push_back(parse_override(item));
      continue;
    }
    const std::size_t colon = item.find(':');
    const std::string_view chain_part = trim(item.substr(0, colon));
    const std::string_view field_part =
        colon == std::string_view::npos ? std::string_view("all") : trim(item.substr(colon + 1));
    std::array<bool, 4> fields{};
    for (std::string_view f : split(field_part, ',')) {
      if (f == "all") {
        fields = {true, true, true, true};
      } else {
        fields[static_cast<std::size_t>(parse_field_name(f))] = true;
      }
    }
    if (chain_part == "all") {
      for (ChainId id : kAllChains) sel.chains.push_back({id, fields});
    } else {
      sel.chains.push_back({parse_chain_name(chain_part), fields});
    }
  }
  return sel;
}

std::string MaskSelection::to_string() const {
  std::vector<std::string> parts;
  for (const ChainFieldSelection& c : chains) {
    std::vector<std::string_view> names;
    for (Field f : kAllFields) {
      if (c.fields[static_cast<std::size_t>(f)]) names.push_back(field_name(f));
    }
    parts.push_back(fmt::format("{}:{}", chain_name(c.chain),
                                names.size() == 4 ? std::string("all") : fmt::format("{}", fmt::join(names, ","))));
  }
  for (const EntryOverride& o : overrides) {
    parts.push_back(fmt::format("{}[{}].{}={}", chain_name(o.chain), o.link + 1, field_name(o.field),
                                o.free ? "free" : "frozen"));
  }
  return fmt::format("{}", fmt::join(parts, ";"));
}

ParameterMask mask_layout(const RobotModel& model) {
  ParameterMask mask;
  for (ChainId id : kAllChains) {
    const std::size_t first = id == ChainId::RightEye ? kSharedHeadLinks : 0;
    for (std::size_t link = first; link < model.chain(id).size(); ++link) {
      for (Field f : kAllFields) mask.entries.push_back({id, link, f, false});
    }
  }
  return mask;
}

ParameterMask default_mask(const RobotModel& model, const MaskSelection& selection) {
  ParameterMask mask = mask_layout(model);
  auto find_entry = [&](ChainId chain, std::size_t link, Field field) -> ParameterEntry& {
    const auto [owner, owner_link] = owner_of(chain, link);
    for (ParameterEntry& e : mask.entries) {
      if (e.chain == owner && e.link == owner_link && e.field == field) return e;
    }
    throw ConfigError(fmt::format("chain {} has no link {}", chain_name(chain), link + 1));
  };

  for (const ChainFieldSelection& sel : selection.chains) {
    const KinematicChain& chain = model.chain(sel.chain);
    const bool arm = sel.chain == ChainId::LeftArm || sel.chain == ChainId::RightArm;
    for (std::size_t link = 1; link < chain.size(); ++link) {
      for (Field f : kAllFields) {
        if (!sel.fields[static_cast<std::size_t>(f)]) continue;
        if (arm && link + 1 == chain.size() && f == Field::Alpha) continue;
        find_entry(sel.chain, link, f).free = true;
      }
    }
  }
  for (const EntryOverride& o : selection.overrides) find_entry(o.chain, o.link, o.field).free = o.free;
  return mask;
}

namespace {

void check_layout(const RobotModel& model, const ParameterMask& mask) {
  const ParameterMask layout = mask_layout(model);
  if (layout.entries.size() != mask.entries.size()) {
    throw DimensionError(fmt::format("mask has {} entries but the model has {} DH scalars",
                                     mask.entries.size(), layout.entries.size()));
  }
}

}  // namespace

ParameterVector pack(const RobotModel& model, const ParameterMask& mask) {
  check_layout(model, mask);
  ParameterVector v(static_cast<Eigen::Index>(mask.free_count()));
  Eigen::Index k = 0;
  for (const ParameterEntry& e : mask.entries) {
    if (e.free) v[k++] = field_value(model.chain(e.chain).links.at(e.link), e.field);
  }
  return v;
}

RobotModel unpack(const RobotModel& model, const ParameterMask& mask, const ParameterVector& values) {
  check_layout(model, mask);
  if (static_cast<std::size_t>(values.size()) != mask.free_count()) {
    throw DimensionError(fmt::format("parameter vector has {} values but the mask frees {}",
                                     values.size(), mask.free_count()));
  }
  RobotModel out = model;
  Eigen::Index k = 0;
  for (const ParameterEntry& e : mask.entries) {
    if (!e.free) continue;
    const double v = values[k++];
    field_ref(out.chain(e.chain).links.at(e.link), e.field) = v;
    if (e.chain == ChainId::LeftEye && e.link < kSharedHeadLinks) {
      field_ref(out.right_eye.links.at(e.link), e.field) = v;
    }
  }
  return out;
}

double perturbation_delta(Field field, double p, double u) {
  switch (field) {
    case Field::Offset: return p / 100.0 * u;
    case Field::Alpha: return p / 1000.0 * u;
    case Field::A:
    case Field::D: return 0.1 * p * u;
  }
  return 0.0;
}

RobotModel perturb(const RobotModel& model, const ParameterMask& mask, double p, std::mt19937_64& rng) {
  if (!(p >= 0.0)) throw ConfigError(fmt::format("perturbation factor must be >= 0, got {}", p));
  ParameterVector v = pack(model, mask);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  Eigen::Index k = 0;
  for (const ParameterEntry& e : mask.entries) {
    if (!e.free) continue;
    v[k] += perturbation_delta(e.field, p, uniform(rng));
    ++k;
  }
  return unpack(model, mask, v);
}

}  // namespace chaincal

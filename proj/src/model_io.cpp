#include "chaincal/model_io.hpp"

#include "chaincal/error.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace chaincal {

using nlohmann::json;

namespace {

json link_to_json(const DHLink& l) {
  return json{{"a_mm", l.a}, {"d_mm", l.d}, {"alpha_rad", l.alpha}, {"offset_rad", l.offset}};
}

double number_at(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ParseError(fmt::format("{}: missing field '{}'", where, key));
  }
  const json& v = obj.at(key);
  if (!v.is_number()) throw ParseError(fmt::format("{}/{}: expected a number", where, key));
  return v.get<double>();
}

json chain_to_json(const KinematicChain& c) {
  json links = json::array();
  for (const DHLink& l : c.links) links.push_back(link_to_json(l));
  json limits = json::array();
  for (const JointLimit& lim : c.limits) limits.push_back(json::array({lim.min, lim.max}));
  json out{{"links", links}, {"joint_limits", limits}};
  if (c.fixed_tail) {
    json rows = json::array();
    const Eigen::Matrix4d m = c.fixed_tail->matrix();
    for (int r = 0; r < 4; ++r) rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2), m(r, 3)}));
    out["fixed_tail"] = rows;
  }
  return out;
}

KinematicChain chain_from_json(const json& j, const std::string& name, const std::string& where) {
  KinematicChain c;
  c.name = name;
  if (!j.is_object()) throw ParseError(fmt::format("{}: expected an object", where));
  if (!j.contains("links") || !j.at("links").is_array()) {
    throw ParseError(fmt::format("{}: missing 'links' array", where));
  }
  const json& links = j.at("links");
  for (std::size_t i = 0; i < links.size(); ++i) {
    const std::string w = fmt::format("{}/links/{}", where, i);
    c.links.push_back({number_at(links[i], "a_mm", w), number_at(links[i], "d_mm", w),
                       number_at(links[i], "alpha_rad", w), number_at(links[i], "offset_rad", w)});
  }
  if (j.contains("joint_limits")) {
    const json& lims = j.at("joint_limits");
    if (!lims.is_array()) throw ParseError(fmt::format("{}/joint_limits: expected an array", where));
    for (std::size_t i = 0; i < lims.size(); ++i) {
      const json& p = lims[i];
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw ParseError(fmt::format("{}/joint_limits/{}: expected [min, max]", where, i));
      }
      c.limits.push_back({p[0].get<double>(), p[1].get<double>()});
    }
  }
  if (j.contains("fixed_tail") && !j.at("fixed_tail").is_null()) {
    const json& rows = j.at("fixed_tail");
    Eigen::Matrix4d m;
    if (!rows.is_array() || rows.size() != 4) {
      throw ParseError(fmt::format("{}/fixed_tail: expected a 4x4 row-major array", where));
    }
    for (int r = 0; r < 4; ++r) {
      const json& row = rows[static_cast<std::size_t>(r)];
      if (!row.is_array() || row.size() != 4) {
        throw ParseError(fmt::format("{}/fixed_tail/{}: expected 4 numbers", where, r));
      }
      for (int col = 0; col < 4; ++col) {
        const json& v = row[static_cast<std::size_t>(col)];
        if (!v.is_number()) throw ParseError(fmt::format("{}/fixed_tail/{}/{}: expected a number", where, r, col));
        m(r, col) = v.get<double>();
      }
    }
    if (!is_rigid(m)) throw ParseError(fmt::format("{}/fixed_tail: not a rigid transform", where));
    Transform t = Transform::Identity();
    t.matrix() = m;
    c.fixed_tail = t;
  }
  return c;
}

}  // namespace

json model_to_json(const RobotModel& model) {
  json chains = json::object();
  for (ChainId id : kAllChains) chains[std::string(chain_name(id))] = chain_to_json(model.chain(id));
  const CameraIntrinsics& k = model.intrinsics;
  return json{
      {"format", "chaincal-model"},
      {"version", kModelFormatVersion},
      {"units", {{"length", "mm"}, {"angle", "rad"}}},
      {"notes",
       json::array({"RA links are a reflection of LA through the Root x=0 plane (approximate).",
                    "cx is assumed to be width/2.",
                    "Joint limits are simulation defaults, not measured values.",
                    "The RA fixed_tail (palm to index fingertip) is never calibrated."})},
      {"chains", chains},
      {"intrinsics",
       {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}},
  };
}

RobotModel model_from_json(const json& doc, const std::string& source) {
  if (!doc.is_object()) throw ParseError(fmt::format("{}: expected a JSON object", source));
  if (doc.value("format", std::string()) != "chaincal-model") {
    throw ParseError(fmt::format("{}: not a chaincal-model document", source));
  }
  if (!doc.contains("version") || !doc.at("version").is_number_integer()) {
    throw ParseError(fmt::format("{}: missing integer 'version'", source));
  }
  const int version = doc.at("version").get<int>();
  if (version != kModelFormatVersion) {
    throw UnsupportedVersionError(
        fmt::format("{}: model format version {} is not supported (expected {})", source, version,
                    kModelFormatVersion));
  }
  if (!doc.contains("chains") || !doc.at("chains").is_object()) {
    throw ParseError(fmt::format("{}: missing 'chains' object", source));
  }
  RobotModel m;
  for (ChainId id : kAllChains) {
    const std::string name(chain_name(id));
    if (!doc.at("chains").contains(name)) {
      throw ParseError(fmt::format("{}: missing chain '{}'", source, name));
    }
    m.chain(id) = chain_from_json(doc.at("chains").at(name), name, fmt::format("{}:/chains/{}", source, name));
  }
  if (!doc.contains("intrinsics")) throw ParseError(fmt::format("{}: missing 'intrinsics'", source));
  const json& k = doc.at("intrinsics");
  const std::string w = fmt::format("{}:/intrinsics", source);
  m.intrinsics = {number_at(k, "fx", w),    number_at(k, "fy", w),    number_at(k, "cx", w),
                  number_at(k, "cy", w),    number_at(k, "width", w), number_at(k, "height", w)};
  try {
    validate(m);
  } catch (const Error& e) {
    throw ParseError(fmt::format("{}: {}", source, e.what()));
  }
  return m;
}

RobotModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open model file '{}'", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return model_from_json(doc, path.string());
}

void save_model(const RobotModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write model file '{}'", path.string()));
  out << model_to_json(model).dump(2) << '\n';
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string model_hash(const RobotModel& model) {
  return fmt::format("{:016x}", fnv1a64(model_to_json(model).dump()));
}

std::filesystem::path default_model_path() {
  return std::filesystem::path(CHAINCAL_DATA_DIR) / "icub_default.json";
}

}  // namespace chaincal

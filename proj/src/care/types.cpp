#include "woundcare/care/types.hpp"

#include "woundcare/error.hpp"

namespace woundcare::care {
namespace {

constexpr std::array<std::string_view, region_count> region_names = {
    "head",     "face",  "neck",    "chest", "abdomen", "upper_back", "lower_back", "sacrum",
    "buttock",  "shoulder", "upper_arm", "elbow", "forearm", "wrist", "hand", "hip",
    "groin",    "thigh", "knee",    "lower_leg", "ankle", "heel",  "foot",       "toes",
};
constexpr std::array<std::string_view, 3> laterality_names = {"left", "right", "center"};
constexpr std::array<std::string_view, 2> view_names = {"front", "back"};

template <typename E, std::size_t N>
E lookup(const std::array<std::string_view, N>& names, std::string_view s, std::string_view code) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<E>(i);
  throw Error(ErrorCode::invalid_argument, "unknown body-map code \"" + std::string(code) + "\"", "location");
}

const Json& require(const Json& j, const char* key, const std::string& path) {
  const std::string field = path.empty() ? key : path + "." + key;
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) {
    throw Error(ErrorCode::invalid_argument, "missing field " + field, field);
  }
  return j.at(key);
}

std::string path_join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

Nrs nrs_field(const Json& j, std::string_view key, const std::string& path) {
  const std::string field = path_join(path, key);
  const Json& v = require(j, std::string(key).c_str(), path);
  if (!v.is_number_integer()) {
    if (v.is_number_float()) throw Error(ErrorCode::range, field + " must be an integer in [0,10]", field);
    throw Error(ErrorCode::invalid_argument, field + " must be an integer", field);
  }
  return Nrs::make(v.get<long long>(), field);
}

std::vector<std::string> string_list(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  return j.at(key).get<std::vector<std::string>>();
}

Json point(const sizing::PixelPoint& p) { return Json::array({p.x, p.y}); }

sizing::PixelPoint point_from(const Json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw Error(ErrorCode::invalid_argument, field + " must be [x, y]", field);
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

std::string_view to_string(Region r) { return region_names[static_cast<std::size_t>(r)]; }
std::string_view to_string(Laterality l) { return laterality_names[static_cast<std::size_t>(l)]; }
std::string_view to_string(View v) { return view_names[static_cast<std::size_t>(v)]; }

std::string BodyLocation::code() const {
  return std::string(to_string(region)) + ":" + std::string(to_string(laterality)) + ":" + std::string(to_string(view));
}

std::string BodyLocation::label() const {
  std::string r(to_string(region));
  for (char& c : r)
    if (c == '_') c = ' ';
  std::string out;
  if (laterality != Laterality::center) out = std::string(to_string(laterality)) + " ";
  return out + r + " (" + std::string(to_string(view)) + ")";
}

BodyLocation BodyLocation::parse(std::string_view code) {
  const auto a = code.find(':');
  const auto b = a == std::string_view::npos ? a : code.find(':', a + 1);
  if (a == std::string_view::npos || b == std::string_view::npos || code.find(':', b + 1) != std::string_view::npos) {
    throw Error(ErrorCode::invalid_argument, "body-map code must be region:laterality:view", "location");
  }
  BodyLocation l;
  l.region = lookup<Region>(region_names, code.substr(0, a), code);
  l.laterality = lookup<Laterality>(laterality_names, code.substr(a + 1, b - a - 1), code);
  l.view = lookup<View>(view_names, code.substr(b + 1), code);
  return l;
}

std::vector<BodyLocation> body_map() {
  std::vector<BodyLocation> out;
  for (std::size_t r = 0; r < region_count; ++r)
    for (std::size_t l = 0; l < laterality_names.size(); ++l)
      for (std::size_t v = 0; v < view_names.size(); ++v)
        out.push_back({static_cast<Region>(r), static_cast<Laterality>(l), static_cast<View>(v)});
  return out;
}

Nrs Nrs::make(long long value, const std::string& field) {
  if (value < 0 || value > 10) {
    throw Error(ErrorCode::range, field + " = " + std::to_string(value) + " is outside [0,10]", field);
  }
  return Nrs(static_cast<int>(value));
}

Json to_json(const BodyLocation& l) {
  return {{"code", l.code()}, {"label", l.label()}, {"body_map_version", body_map_version}};
}

Json to_json(const Patient& p) {
  return {{"id", p.id},
          {"display_name", p.display_name},
          {"underlying_conditions", p.underlying_conditions},
          {"allergies", p.allergies},
          {"medications", p.medications},
          {"wound_dressing", p.wound_dressing},
          {"wound_ids", p.wound_ids},
          {"clinician_ids", p.clinician_ids}};
}

Patient patient_from_json(const Json& j) {
  Patient p;
  p.id = require(j, "id", "").get<std::string>();
  p.display_name = j.value("display_name", "");
  p.underlying_conditions = string_list(j, "underlying_conditions");
  p.allergies = string_list(j, "allergies");
  p.medications = string_list(j, "medications");
  p.wound_dressing = string_list(j, "wound_dressing");
  p.wound_ids = string_list(j, "wound_ids");
  p.clinician_ids = string_list(j, "clinician_ids");
  return p;
}

Json to_json(const WoundRecord& w) {
  return {{"id", w.id},
          {"patient_id", w.patient_id},
          {"location", w.location.code()},
          {"created_at", format_rfc3339(w.created_at)}};
}

WoundRecord wound_from_json(const Json& j) {
  WoundRecord w;
  w.id = require(j, "id", "").get<std::string>();
  w.patient_id = require(j, "patient_id", "").get<std::string>();
  w.location = BodyLocation::parse(require(j, "location", "").get<std::string>());
  w.created_at = parse_rfc3339(require(j, "created_at", "").get<std::string>());
  return w;
}

Json to_json(const WoundQuestionnaire& q) {
  return {{"pain", q.pain.value()}, {"itching", q.itching.value()}, {"exudate", q.exudate.value()}};
}

Json to_json(const GeneralQuestionnaire& q) {
  return {{"mood", q.mood.value()},
          {"activity_impact", q.activity_impact.value()},
          {"quality_of_life", q.quality_of_life.value()}};
}

WoundQuestionnaire wound_questionnaire_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, path + " must be an object", path);
  return {nrs_field(j, "pain", path), nrs_field(j, "itching", path), nrs_field(j, "exudate", path)};
}

GeneralQuestionnaire general_questionnaire_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, path + " must be an object", path);
  return {nrs_field(j, "mood", path), nrs_field(j, "activity_impact", path), nrs_field(j, "quality_of_life", path)};
}

Json to_json(const SegmentationSummary& s) {
  const auto& c = s.crop_rect;
  return {{"mask_ref", s.mask_ref},
          {"threshold", s.threshold},
          {"crop_rect",
           {{"x", c.x}, {"y", c.y}, {"width", c.width}, {"height", c.height},
            {"source_px_per_mask_px", c.source_px_per_mask_px}}},
          {"component_pixel_counts", s.component_pixel_counts},
          {"dropped_px", s.dropped_px}};
}

SegmentationSummary segmentation_from_json(const Json& j) {
  SegmentationSummary s;
  s.mask_ref = j.at("mask_ref").get<std::string>();
  s.threshold = j.at("threshold").get<double>();
  const Json& c = j.at("crop_rect");
  s.crop_rect = {c.at("x").get<int>(), c.at("y").get<int>(), c.at("width").get<int>(), c.at("height").get<int>(),
                 c.at("source_px_per_mask_px").get<double>()};
  s.component_pixel_counts = j.at("component_pixel_counts").get<std::vector<std::size_t>>();
  s.dropped_px = j.value("dropped_px", std::size_t{0});
  return s;
}

Json to_json(const sizing::ReferenceAnnotation& r) {
  return {{"endpoint_a", point(r.endpoint_a)},
          {"endpoint_b", point(r.endpoint_b)},
          {"known_length_mm", r.known_length_mm}};
}

sizing::ReferenceAnnotation reference_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, path + " must be an object", path);
  sizing::ReferenceAnnotation r;
  r.endpoint_a = point_from(require(j, "endpoint_a", path), path_join(path, "endpoint_a"));
  r.endpoint_b = point_from(require(j, "endpoint_b", path), path_join(path, "endpoint_b"));
  const Json& len = require(j, "known_length_mm", path);
  if (!len.is_number()) {
    throw Error(ErrorCode::invalid_argument, "known_length_mm must be a number", path_join(path, "known_length_mm"));
  }
  r.known_length_mm = len.get<double>();
  try {
    r.validate();
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), path_join(path, e.field()));
  }
  return r;
}

Json to_json(const sizing::WoundSize& s) {
  return {{"component_area_mm2", s.component_area_mm2},
          {"total_mm2", s.total_mm2},
          {"total_cm2", s.total_cm2},
          {"scale_mm_per_px", s.scale_mm_per_px}};
}

sizing::WoundSize wound_size_from_json(const Json& j) {
  sizing::WoundSize s;
  s.component_area_mm2 = j.at("component_area_mm2").get<std::vector<double>>();
  s.total_mm2 = j.at("total_mm2").get<double>();
  s.total_cm2 = j.at("total_cm2").get<double>();
  s.scale_mm_per_px = j.at("scale_mm_per_px").get<double>();
  return s;
}

Json to_json(const WoundEntry& e) {
  Json j = {{"wound_id", e.wound_id},
            {"image_ref", e.image_ref},
            {"confirmed", e.confirmed},
            {"questionnaire", to_json(e.questionnaire)},
            {"segmentation", nullptr},
            {"reference", nullptr},
            {"size", nullptr}};
  if (e.segmentation) j["segmentation"] = to_json(*e.segmentation);
  if (e.reference) j["reference"] = to_json(*e.reference);
  if (e.size) j["size"] = to_json(*e.size);
  return j;
}

Json to_json(const DocumentationRecord& r) {
  Json wounds = Json::array();
  for (const auto& e : r.wounds) wounds.push_back(to_json(e));
  return {{"id", r.id},
          {"patient_id", r.patient_id},
          {"timestamp", format_rfc3339(r.timestamp)},
          {"wounds", wounds},
          {"general_questionnaire", to_json(r.general)},
          {"feedback_mode", seg::to_string(r.feedback_mode)},
          {"idempotency_key", r.idempotency_key}};
}

DocumentationRecord documentation_from_json(const Json& j) {
  DocumentationRecord r;
  r.id = j.at("id").get<std::string>();
  r.patient_id = j.at("patient_id").get<std::string>();
  r.timestamp = parse_rfc3339(j.at("timestamp").get<std::string>());
  r.general = general_questionnaire_from_json(j.at("general_questionnaire"), "general_questionnaire");
  r.feedback_mode = seg::feedback_mode_from_string(j.value("feedback_mode", "a_posteriori"));
  r.idempotency_key = j.value("idempotency_key", "");
  for (std::size_t i = 0; i < j.at("wounds").size(); ++i) {
    const Json& w = j.at("wounds")[i];
    const std::string path = "wounds[" + std::to_string(i) + "]";
    WoundEntry e;
    e.wound_id = w.at("wound_id").get<std::string>();
    e.image_ref = w.at("image_ref").get<std::string>();
    e.confirmed = w.at("confirmed").get<bool>();
    e.questionnaire = wound_questionnaire_from_json(w.at("questionnaire"), path + ".questionnaire");
    if (w.contains("segmentation") && !w["segmentation"].is_null()) e.segmentation = segmentation_from_json(w["segmentation"]);
    if (w.contains("reference") && !w["reference"].is_null()) e.reference = reference_from_json(w["reference"], path + ".reference");
    if (w.contains("size") && !w["size"].is_null()) e.size = wound_size_from_json(w["size"]);
    r.wounds.push_back(std::move(e));
  }
  return r;
}

}  // namespace woundcare::care

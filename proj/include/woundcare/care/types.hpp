#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "woundcare/seg/pipeline.hpp"
#include "woundcare/sizing.hpp"
#include "woundcare/timeutil.hpp"

namespace woundcare::care {

using Json = nlohmann::json;

inline constexpr int body_map_version = 1;

enum class Region {
  head, face, neck, chest, abdomen, upper_back, lower_back, sacrum, buttock, shoulder, upper_arm, elbow,
  forearm, wrist, hand, hip, groin, thigh, knee, lower_leg, ankle, heel, foot, toes,
};
inline constexpr std::size_t region_count = 24;
enum class Laterality { left, right, center };
enum class View { front, back };

std::string_view to_string(Region r);
std::string_view to_string(Laterality l);
std::string_view to_string(View v);

/// One cell of the body map: "region:laterality:view", e.g. "lower_leg:left:front".
struct BodyLocation {
  Region region = Region::head;
  Laterality laterality = Laterality::center;
  View view = View::front;

  std::string code() const;
  std::string label() const;
  static BodyLocation parse(std::string_view code);
  bool operator==(const BodyLocation&) const = default;
};

/// Every valid body-map code, in enumeration order.
std::vector<BodyLocation> body_map();

/// Numeric rating scale item, 0..10. Out-of-range values cannot be constructed.
class Nrs {
 public:
  Nrs() = default;
  /// Throws ErrorCode::range naming `field`.
  static Nrs make(long long value, const std::string& field);
  int value() const noexcept { return value_; }
  bool operator==(const Nrs&) const = default;

 private:
  explicit Nrs(int v) : value_(v) {}
  int value_ = 0;
};

struct Patient {
  std::string id;
  std::string display_name;
  std::vector<std::string> underlying_conditions;
  std::vector<std::string> allergies;
  std::vector<std::string> medications;
  std::vector<std::string> wound_dressing;
  std::vector<std::string> wound_ids;
  std::vector<std::string> clinician_ids;
};

struct WoundRecord {
  std::string id;
  std::string patient_id;
  BodyLocation location;
  Timestamp created_at;
};

struct WoundQuestionnaire {
  Nrs pain, itching, exudate;
};
inline constexpr std::array<std::string_view, 3> wound_items = {"pain", "itching", "exudate"};

struct GeneralQuestionnaire {
  Nrs mood, activity_impact, quality_of_life;
};
inline constexpr std::array<std::string_view, 3> general_items = {"mood", "activity_impact", "quality_of_life"};

/// What the server kept from segmenting one wound image.
struct SegmentationSummary {
  std::string mask_ref;
  double threshold = 0.75;
  seg::CropRect crop_rect;
  std::vector<std::size_t> component_pixel_counts;
  std::size_t dropped_px = 0;
};

struct WoundEntry {
  std::string wound_id;
  std::string image_ref;
  bool confirmed = false;
  WoundQuestionnaire questionnaire;
  std::optional<SegmentationSummary> segmentation;
  std::optional<sizing::ReferenceAnnotation> reference;
  std::optional<sizing::WoundSize> size;
};

struct DocumentationRecord {
  std::string id;
  std::string patient_id;
  Timestamp timestamp;
  std::vector<WoundEntry> wounds;
  GeneralQuestionnaire general;
  seg::FeedbackMode feedback_mode = seg::FeedbackMode::a_posteriori;
  std::string idempotency_key;
};

Json to_json(const BodyLocation& l);
Json to_json(const Patient& p);
Json to_json(const WoundRecord& w);
Json to_json(const WoundQuestionnaire& q);
Json to_json(const GeneralQuestionnaire& q);
Json to_json(const SegmentationSummary& s);
Json to_json(const sizing::ReferenceAnnotation& r);
Json to_json(const sizing::WoundSize& s);
Json to_json(const WoundEntry& e);
Json to_json(const DocumentationRecord& r);

Patient patient_from_json(const Json& j);
WoundRecord wound_from_json(const Json& j);
/// `path` prefixes field names in range errors, e.g. "wounds[0].questionnaire".
WoundQuestionnaire wound_questionnaire_from_json(const Json& j, const std::string& path);
GeneralQuestionnaire general_questionnaire_from_json(const Json& j, const std::string& path);
SegmentationSummary segmentation_from_json(const Json& j);
sizing::ReferenceAnnotation reference_from_json(const Json& j, const std::string& path);
sizing::WoundSize wound_size_from_json(const Json& j);
DocumentationRecord documentation_from_json(const Json& j);

}  // namespace woundcare::care

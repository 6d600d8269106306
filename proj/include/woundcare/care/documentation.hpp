#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "woundcare/care/types.hpp"
#include "woundcare/store.hpp"

namespace woundcare::care {

struct PatientInput {
  std::string id;  // empty: allocate "pat-NNNN"
  std::string display_name;
  std::vector<std::string> underlying_conditions;
  std::vector<std::string> allergies;
  std::vector<std::string> medications;
  std::vector<std::string> wound_dressing;
  std::vector<std::string> clinician_ids;
};

Patient create_patient(store::Store& st, const PatientInput& in);
Patient get_patient(const store::Store& st, const std::string& id);
std::vector<Patient> list_patients(const store::Store& st);

WoundRecord create_wound(store::Store& st, const std::string& patient_id, const BodyLocation& location,
                         Timestamp created_at);
WoundRecord get_wound(const store::Store& st, const std::string& id);

struct WoundEntryInput {
  std::string wound_id;
  std::string image_ref;
  bool confirmed = false;
  std::optional<WoundQuestionnaire> questionnaire;
  std::optional<SegmentationSummary> segmentation;
  std::optional<sizing::ReferenceAnnotation> reference;
};

struct DocumentationSubmission {
  std::string patient_id;
  Timestamp timestamp;
  std::vector<WoundEntryInput> wounds;
  std::optional<GeneralQuestionnaire> general;
  seg::FeedbackMode feedback_mode = seg::FeedbackMode::a_posteriori;
  std::string idempotency_key;
};

/// Throws incomplete_submission, quality_unconfirmed, not_found or invalid_argument with a field path.
void validate_submission(const store::Store& st, const DocumentationSubmission& sub);

struct RecordOutcome {
  DocumentationRecord record;
  bool replayed = false;
};

/// Validates and commits one record. A repeated idempotency key returns the original record.
RecordOutcome record_documentation(store::Store& st, const DocumentationSubmission& sub);
std::optional<DocumentationRecord> find_replay(const store::Store& st, const std::string& patient_id,
                                               const std::string& idempotency_key);

/// Patients whose records reference a blob (images and masks). Registered before the record is committed.
void add_blob_owner(store::Store& st, const std::string& blob_ref, const std::string& patient_id);
std::vector<std::string> blob_owners(const store::Store& st, const std::string& blob_ref);

DocumentationRecord get_documentation(const store::Store& st, const std::string& record_id);
/// Ascending by (timestamp, id).
std::vector<DocumentationRecord> list_documentations(const store::Store& st, const std::string& patient_id);

struct GalleryItem {
  std::size_t index = 0;  // 1-based
  std::string record_id;
  std::string image_ref;
  Timestamp timestamp;
  std::optional<std::string> mask_ref;
};

struct Gallery {
  std::string wound_id;
  std::vector<GalleryItem> items;
  std::size_t total() const noexcept { return items.size(); }
  /// "i of N".
  static std::string counter(std::size_t index, std::size_t total);
};

Gallery gallery(const store::Store& st, const std::string& wound_id);
Gallery gallery_from(const std::vector<DocumentationRecord>& records, const std::string& wound_id);

enum class TrajectoryKind { wound, general };

struct TrajectoryPoint {
  Date date;
  std::string record_id;
  Timestamp timestamp;
  std::map<std::string, double> values;
};

struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::wound;
  std::string subject_id;
  std::vector<std::string> series;
  std::vector<TrajectoryPoint> points;
};

/// Inclusive calendar-day bounds; either side may be open.
struct DateRange {
  std::optional<Date> from;
  std::optional<Date> to;
  void validate() const;
  bool contains(Date d) const;
};

Trajectory wound_trajectory(const store::Store& st, const std::string& wound_id, const DateRange& range = {});
Trajectory general_trajectory(const store::Store& st, const std::string& patient_id, const DateRange& range = {});
Trajectory wound_trajectory_from(const std::vector<DocumentationRecord>& records, const std::string& wound_id,
                                 const DateRange& range = {});
Trajectory general_trajectory_from(const std::vector<DocumentationRecord>& records, const std::string& patient_id,
                                   const DateRange& range = {});

struct PatientOverview {
  Patient patient;
  std::vector<WoundRecord> wounds;
};

PatientOverview patient_overview(const store::Store& st, const std::string& patient_id);

/// Attaches a reference annotation to one wound entry and recomputes its size.
sizing::WoundSize annotate_reference(store::Store& st, const std::string& record_id, const std::string& wound_id,
                                     const sizing::ReferenceAnnotation& ro);

Json to_json(const Gallery& g);
Json to_json(const Trajectory& t);
Json to_json(const PatientOverview& o);

}  // namespace woundcare::care

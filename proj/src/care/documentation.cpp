#include "woundcare/care/documentation.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "woundcare/error.hpp"

namespace woundcare::care {
namespace {

constexpr const char* kPatients = "patients";
constexpr const char* kWounds = "wounds";
constexpr const char* kDocs = "documentations";
constexpr const char* kIdempotency = "idempotency";
constexpr const char* kBlobOwners = "blob_owners";

std::string padded(const char* prefix, std::uint64_t n, int width) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s-%0*llu", prefix, width, static_cast<unsigned long long>(n));
  return buf;
}

std::string entry_path(std::size_t i) { return "wounds[" + std::to_string(i) + "]"; }

sizing::WoundSize size_for(const SegmentationSummary& s, const sizing::ReferenceAnnotation& ro) {
  return sizing::estimate_area(s.component_pixel_counts, sizing::calibrate_scale(ro), s.crop_rect.source_px_per_mask_px);
}

std::optional<store::Document> find_record_doc(const store::Store& st, const std::string& record_id) {
  const std::string suffix = "/" + record_id;
  for (auto& d : st.list(kDocs)) {
    if (d.key.size() > suffix.size() && d.key.compare(d.key.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return std::move(d);
    }
  }
  return std::nullopt;
}

bool before(const DocumentationRecord& a, const DocumentationRecord& b) {
  return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.id < b.id;
}

}  // namespace

Patient create_patient(store::Store& st, const PatientInput& in) {
  Patient p;
  p.id = in.id.empty() ? padded("pat", st.next_sequence("patient"), 4) : in.id;
  p.display_name = in.display_name;
  p.underlying_conditions = in.underlying_conditions;
  p.allergies = in.allergies;
  p.medications = in.medications;
  p.wound_dressing = in.wound_dressing;
  p.clinician_ids = in.clinician_ids;
  st.create(kPatients, p.id, to_json(p));
  return p;
}

Patient get_patient(const store::Store& st, const std::string& id) {
  const auto d = st.find(kPatients, id);
  if (!d) throw Error(ErrorCode::not_found, "patient " + id + " not found", "patient_id");
  return patient_from_json(d->body);
}

std::vector<Patient> list_patients(const store::Store& st) {
  std::vector<Patient> out;
  for (const auto& d : st.list(kPatients)) out.push_back(patient_from_json(d.body));
  return out;
}

WoundRecord create_wound(store::Store& st, const std::string& patient_id, const BodyLocation& location,
                         Timestamp created_at) {
  get_patient(st, patient_id);
  WoundRecord w{padded("wnd", st.next_sequence("wound"), 4), patient_id, location, created_at};
  st.create(kWounds, w.id, to_json(w));
  st.update(kPatients, patient_id, [&](const std::optional<store::Document>& cur) {
    if (!cur) throw Error(ErrorCode::not_found, "patient " + patient_id + " not found", "patient_id");
    Patient p = patient_from_json(cur->body);
    p.wound_ids.push_back(w.id);
    return to_json(p);
  });
  return w;
}

WoundRecord get_wound(const store::Store& st, const std::string& id) {
  const auto d = st.find(kWounds, id);
  if (!d) throw Error(ErrorCode::not_found, "wound " + id + " not found", "wound_id");
  return wound_from_json(d->body);
}

void validate_submission(const store::Store& st, const DocumentationSubmission& sub) {
  get_patient(st, sub.patient_id);
  if (sub.wounds.empty()) {
    throw Error(ErrorCode::incomplete_submission, "a documentation needs at least one wound entry", "wounds");
  }
  if (!sub.general) {
    throw Error(ErrorCode::incomplete_submission, "the general questionnaire is missing", "general_questionnaire");
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < sub.wounds.size(); ++i) {
    const WoundEntryInput& e = sub.wounds[i];
    const std::string path = entry_path(i);
    if (e.wound_id.empty()) throw Error(ErrorCode::invalid_argument, "wound_id is required", path + ".wound_id");
    if (!e.questionnaire) {
      throw Error(ErrorCode::incomplete_submission, "wound questionnaire is missing", path + ".questionnaire");
    }
    if (!e.confirmed) {
      throw Error(ErrorCode::quality_unconfirmed, "image quality was not confirmed", path + ".confirmed");
    }
    const auto wound = st.find(kWounds, e.wound_id);
    if (!wound || wound->body.at("patient_id") != sub.patient_id) {
      throw Error(ErrorCode::not_found, "wound " + e.wound_id + " does not belong to patient " + sub.patient_id,
                  path + ".wound_id");
    }
    if (!seen.insert(e.wound_id).second) {
      throw Error(ErrorCode::invalid_argument, "wound " + e.wound_id + " appears twice", path + ".wound_id");
    }
    if (e.image_ref.empty() || !st.has_blob(e.image_ref)) {
      throw Error(ErrorCode::not_found, "image for wound " + e.wound_id + " is not stored", path + ".image");
    }
  }
}

std::optional<DocumentationRecord> find_replay(const store::Store& st, const std::string& patient_id,
                                               const std::string& idempotency_key) {
  if (idempotency_key.empty()) return std::nullopt;
  const auto marker = st.find(kIdempotency, patient_id + "/" + idempotency_key);
  if (!marker) return std::nullopt;
  const auto rec = st.find(kDocs, patient_id + "/" + marker->body.at("record_id").get<std::string>());
  if (!rec) return std::nullopt;
  return documentation_from_json(rec->body);
}

void add_blob_owner(store::Store& st, const std::string& blob_ref, const std::string& patient_id) {
  st.update(kBlobOwners, blob_ref, [&](const std::optional<store::Document>& cur) {
    store::Json owners = cur ? cur->body.at("patient_ids") : store::Json::array();
    if (std::find(owners.begin(), owners.end(), patient_id) == owners.end()) owners.push_back(patient_id);
    return store::Json{{"patient_ids", owners}};
  });
}

std::vector<std::string> blob_owners(const store::Store& st, const std::string& blob_ref) {
  const auto d = st.find(kBlobOwners, blob_ref);
  if (!d) return {};
  return d->body.at("patient_ids").get<std::vector<std::string>>();
}

RecordOutcome record_documentation(store::Store& st, const DocumentationSubmission& sub) {
  validate_submission(st, sub);

  std::string record_id;
  if (!sub.idempotency_key.empty()) {
    const std::string marker_key = sub.patient_id + "/" + sub.idempotency_key;
    for (;;) {
      if (const auto marker = st.find(kIdempotency, marker_key)) {
        record_id = marker->body.at("record_id").get<std::string>();
        if (const auto rec = st.find(kDocs, sub.patient_id + "/" + record_id)) {
          return {documentation_from_json(rec->body), true};
        }
        break;  // marker committed but record write interrupted: finish it under the same id
      }
      const std::string fresh = padded("doc", st.next_sequence("documentation"), 6);
      try {
        st.create(kIdempotency, marker_key, store::Json{{"record_id", fresh}});
        record_id = fresh;
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::conflict) throw;
      }
    }
  } else {
    record_id = padded("doc", st.next_sequence("documentation"), 6);
  }

  DocumentationRecord r;
  r.id = record_id;
  r.patient_id = sub.patient_id;
  r.timestamp = sub.timestamp;
  r.general = *sub.general;
  r.feedback_mode = sub.feedback_mode;
  r.idempotency_key = sub.idempotency_key;
  for (const WoundEntryInput& in : sub.wounds) {
    WoundEntry e;
    e.wound_id = in.wound_id;
    e.image_ref = in.image_ref;
    e.confirmed = in.confirmed;
    e.questionnaire = *in.questionnaire;
    e.segmentation = in.segmentation;
    e.reference = in.reference;
    if (in.reference && in.segmentation) e.size = size_for(*in.segmentation, *in.reference);
    r.wounds.push_back(std::move(e));
  }
  for (const WoundEntry& e : r.wounds) {
    add_blob_owner(st, e.image_ref, r.patient_id);
    if (e.segmentation) add_blob_owner(st, e.segmentation->mask_ref, r.patient_id);
  }
  try {
    st.create(kDocs, r.patient_id + "/" + r.id, to_json(r));
  } catch (const Error& e) {
    // A concurrent replay of the same key won the race.
    if (e.code() != ErrorCode::conflict || sub.idempotency_key.empty()) throw;
    return {documentation_from_json(st.get(kDocs, r.patient_id + "/" + r.id).body), true};
  }
  return {std::move(r), false};
}

DocumentationRecord get_documentation(const store::Store& st, const std::string& record_id) {
  const auto d = find_record_doc(st, record_id);
  if (!d) throw Error(ErrorCode::not_found, "documentation " + record_id + " not found", "record_id");
  return documentation_from_json(d->body);
}

std::vector<DocumentationRecord> list_documentations(const store::Store& st, const std::string& patient_id) {
  std::vector<DocumentationRecord> out;
  for (const auto& d : st.list(kDocs, patient_id + "/")) out.push_back(documentation_from_json(d.body));
  std::sort(out.begin(), out.end(), before);
  return out;
}

std::string Gallery::counter(std::size_t index, std::size_t total) {
  return std::to_string(index) + " of " + std::to_string(total);
}

Gallery gallery_from(const std::vector<DocumentationRecord>& records, const std::string& wound_id) {
  std::vector<const DocumentationRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return before(*a, *b); });
  Gallery g;
  g.wound_id = wound_id;
  for (const auto* r : sorted) {
    for (const auto& e : r->wounds) {
      if (e.wound_id != wound_id) continue;
      GalleryItem item;
      item.index = g.items.size() + 1;
      item.record_id = r->id;
      item.image_ref = e.image_ref;
      item.timestamp = r->timestamp;
      if (e.segmentation) item.mask_ref = e.segmentation->mask_ref;
      g.items.push_back(std::move(item));
    }
  }
  return g;
}

Gallery gallery(const store::Store& st, const std::string& wound_id) {
  const WoundRecord w = get_wound(st, wound_id);
  return gallery_from(list_documentations(st, w.patient_id), wound_id);
}

void DateRange::validate() const {
  if (from && to && *to < *from) {
    throw Error(ErrorCode::invalid_argument, "date range ends before it starts", "to");
  }
}

bool DateRange::contains(Date d) const { return (!from || *from <= d) && (!to || d <= *to); }

namespace {

template <typename Extract>
Trajectory build_trajectory(const std::vector<DocumentationRecord>& records, const DateRange& range,
                            Extract&& extract) {
  range.validate();
  std::vector<const DocumentationRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return before(*a, *b); });
  std::map<Date, TrajectoryPoint> by_day;
  for (const auto* r : sorted) {
    const Date day = date_of(r->timestamp);
    if (!range.contains(day)) continue;
    std::map<std::string, double> values;
    if (!extract(*r, values)) continue;
    by_day[day] = TrajectoryPoint{day, r->id, r->timestamp, std::move(values)};
  }
  Trajectory t;
  for (auto& [day, p] : by_day) t.points.push_back(std::move(p));
  return t;
}

}  // namespace

Trajectory wound_trajectory_from(const std::vector<DocumentationRecord>& records, const std::string& wound_id,
                                 const DateRange& range) {
  Trajectory t = build_trajectory(records, range, [&](const DocumentationRecord& r, std::map<std::string, double>& v) {
    for (const auto& e : r.wounds) {
      if (e.wound_id != wound_id) continue;
      v["pain"] = e.questionnaire.pain.value();
      v["itching"] = e.questionnaire.itching.value();
      v["exudate"] = e.questionnaire.exudate.value();
      if (e.size) v["area_cm2"] = e.size->total_cm2;
      return true;
    }
    return false;
  });
  t.kind = TrajectoryKind::wound;
  t.subject_id = wound_id;
  t.series = {"pain", "itching", "exudate", "area_cm2"};
  return t;
}

Trajectory general_trajectory_from(const std::vector<DocumentationRecord>& records, const std::string& patient_id,
                                   const DateRange& range) {
  Trajectory t = build_trajectory(records, range, [&](const DocumentationRecord& r, std::map<std::string, double>& v) {
    if (r.patient_id != patient_id) return false;
    v["mood"] = r.general.mood.value();
    v["activity_impact"] = r.general.activity_impact.value();
    v["quality_of_life"] = r.general.quality_of_life.value();
    return true;
  });
  t.kind = TrajectoryKind::general;
  t.subject_id = patient_id;
  t.series = {"mood", "activity_impact", "quality_of_life"};
  return t;
}

Trajectory wound_trajectory(const store::Store& st, const std::string& wound_id, const DateRange& range) {
  range.validate();
  const WoundRecord w = get_wound(st, wound_id);
  return wound_trajectory_from(list_documentations(st, w.patient_id), wound_id, range);
}

Trajectory general_trajectory(const store::Store& st, const std::string& patient_id, const DateRange& range) {
  range.validate();
  get_patient(st, patient_id);
  return general_trajectory_from(list_documentations(st, patient_id), patient_id, range);
}

PatientOverview patient_overview(const store::Store& st, const std::string& patient_id) {
  PatientOverview o{get_patient(st, patient_id), {}};
  for (const auto& id : o.patient.wound_ids) o.wounds.push_back(get_wound(st, id));
  return o;
}

sizing::WoundSize annotate_reference(store::Store& st, const std::string& record_id, const std::string& wound_id,
                                     const sizing::ReferenceAnnotation& ro) {
  const auto doc = find_record_doc(st, record_id);
  if (!doc) throw Error(ErrorCode::not_found, "documentation " + record_id + " not found", "record_id");
  sizing::WoundSize size;
  st.update(kDocs, doc->key, [&](const std::optional<store::Document>& cur) {
    if (!cur) throw Error(ErrorCode::not_found, "documentation " + record_id + " not found", "record_id");
    DocumentationRecord r = documentation_from_json(cur->body);
    auto it = std::find_if(r.wounds.begin(), r.wounds.end(), [&](const WoundEntry& e) { return e.wound_id == wound_id; });
    if (it == r.wounds.end()) {
      throw Error(ErrorCode::not_found, "documentation " + record_id + " has no entry for wound " + wound_id,
                  "wound_id");
    }
    if (!it->segmentation) {
      throw Error(ErrorCode::invalid_argument, "wound " + wound_id + " in " + record_id + " was not segmented",
                  "wound_id");
    }
    size = size_for(*it->segmentation, ro);
    it->reference = ro;
    it->size = size;
    return to_json(r);
  });
  return size;
}

Json to_json(const Gallery& g) {
  Json items = Json::array();
  for (const auto& i : g.items) {
    items.push_back({{"index", i.index},
                     {"counter", Gallery::counter(i.index, g.total())},
                     {"record_id", i.record_id},
                     {"image_ref", i.image_ref},
                     {"timestamp", format_rfc3339(i.timestamp)},
                     {"mask_ref", i.mask_ref ? Json(*i.mask_ref) : Json(nullptr)}});
  }
  return {{"wound_id", g.wound_id}, {"total", g.total()}, {"items", items}};
}

Json to_json(const Trajectory& t) {
  Json points = Json::array();
  for (const auto& p : t.points) {
    Json values = Json::object();
    for (const auto& [k, v] : p.values) values[k] = v;
    points.push_back({{"date", format_date(p.date)},
                      {"record_id", p.record_id},
                      {"timestamp", format_rfc3339(p.timestamp)},
                      {"values", values}});
  }
  return {{"kind", t.kind == TrajectoryKind::wound ? "wound" : "general"},
          {"subject_id", t.subject_id},
          {"series", t.series},
          {"points", points}};
}

Json to_json(const PatientOverview& o) {
  Json wounds = Json::array();
  for (const auto& w : o.wounds) {
    wounds.push_back({{"id", w.id},
                      {"location", to_json(w.location)},
                      {"created_at", format_rfc3339(w.created_at)}});
  }
  return {{"id", o.patient.id},
          {"display_name", o.patient.display_name},
          {"underlying_conditions", o.patient.underlying_conditions},
          {"allergies", o.patient.allergies},
          {"medications", o.patient.medications},
          {"wound_dressing", o.patient.wound_dressing},
          {"wounds", wounds}};
}

}  // namespace woundcare::care

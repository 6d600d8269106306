#include "demo.hpp"

#include <algorithm>
#include <cmath>

#include "woundcare/api/auth.hpp"
#include "woundcare/care/documentation.hpp"
#include "woundcare/error.hpp"
#include "woundcare/scheduling.hpp"
#include "woundcare/seg/image.hpp"
#include "woundcare/seg/pipeline.hpp"

namespace woundctl {
namespace {

using namespace woundcare;
using namespace std::chrono_literals;

constexpr int image_side = 224;
constexpr std::uint8_t skin[3] = {222, 176, 150};
constexpr std::uint8_t wound_bed[3] = {128, 36, 40};

// Reference ruler drawn along the bottom edge: 100 px for 25 mm.
constexpr sizing::ReferenceAnnotation ruler{{12, 212}, {112, 212}, 25.0};

struct DemoWound {
  std::string location;
  int start_radius;
  int shrink_per_day;
  int start_pain;
};

struct DemoPatient {
  care::PatientInput input;
  std::string username;
  std::string password;
  std::vector<DemoWound> wounds;
};

std::vector<DemoPatient> cast() {
  return {
      {{"", "Anna Example", {"type 2 diabetes", "peripheral arterial disease"}, {"latex"},
        {"metformin 1000 mg", "aspirin 100 mg"}, {"foam dressing, changed every 2 days"}, {demo_clinician}},
       "anna",
       "demo-anna",
       {{"lower_leg:left:front", 70, 4, 7}, {"heel:right:back", 50, 2, 5}}},
      {{"", "Ben Example", {"paraplegia"}, {}, {"baclofen 10 mg"}, {"hydrocolloid dressing"}, {demo_clinician}},
       "ben",
       "demo-ben",
       {{"sacrum:center:back", 40, 1, 4}}},
  };
}

bool in_disk(int x, int y, int r) {
  const int dx = x - image_side / 2, dy = y - image_side / 2;
  return dx * dx + dy * dy <= r * r;
}

RgbImage wound_photo(int radius) {
  RgbImage img(image_side, image_side);
  for (int y = 0; y < image_side; ++y) {
    for (int x = 0; x < image_side; ++x) {
      const std::uint8_t* c = in_disk(x, y, radius) ? wound_bed : skin;
      std::copy(c, c + 3, img.at(x, y));
    }
  }
  for (int x = static_cast<int>(ruler.endpoint_a.x); x <= static_cast<int>(ruler.endpoint_b.x); ++x)
    for (int y = 210; y <= 214; ++y) std::fill(img.at(x, y), img.at(x, y) + 3, 20);
  return img;
}

Mask wound_mask(int radius) {
  Mask m(image_side, image_side);
  for (int y = 0; y < image_side; ++y)
    for (int x = 0; x < image_side; ++x) m.set(x, y, in_disk(x, y, radius));
  return m;
}

std::string put(store::Store& st, const std::vector<std::uint8_t>& bytes) {
  return st.put_blob(bytes, "image/png");
}

care::Nrs nrs(int v, const char* field) { return care::Nrs::make(std::clamp(v, 0, 10), field); }

}  // namespace

Timestamp demo_base() { return parse_rfc3339("2026-01-01T09:00:00Z"); }

DemoSummary seed_demo(const std::filesystem::path& data_dir, bool fsync) {
  store::StoreOptions opts;
  opts.fsync = fsync;
  store::Store st(data_dir, opts);
  if (!care::list_patients(st).empty())
    throw Error(ErrorCode::conflict, data_dir.string() + " already holds patients", "data");

  DemoSummary out;
  api::create_user(st, "dr.demo", "demo-clinician", api::Role::clinician, demo_clinician);
  out.accounts.push_back({"dr.demo", "demo-clinician", "clinician", demo_clinician});

  const seg::SegmentationParams params;
  for (const DemoPatient& dp : cast()) {
    const care::Patient p = care::create_patient(st, dp.input);
    out.patient_ids.push_back(p.id);
    api::create_user(st, dp.username, dp.password, api::Role::patient, p.id);
    out.accounts.push_back({dp.username, dp.password, "patient", p.id});

    std::vector<care::WoundRecord> wounds;
    for (const DemoWound& w : dp.wounds) {
      wounds.push_back(care::create_wound(st, p.id, care::BodyLocation::parse(w.location), demo_base() - 24h));
      out.wound_ids.push_back(wounds.back().id);
    }

    for (int day = 0; day < demo_days; ++day) {
      care::DocumentationSubmission sub;
      sub.patient_id = p.id;
      sub.timestamp = demo_base() + std::chrono::days(day);
      sub.idempotency_key = "demo-" + std::to_string(day);
      sub.general = care::GeneralQuestionnaire{nrs(4 + day / 3, "mood"), nrs(7 - day / 3, "activity_impact"),
                                               nrs(4 + day / 4, "quality_of_life")};
      for (std::size_t i = 0; i < wounds.size(); ++i) {
        const DemoWound& w = dp.wounds[i];
        const int radius = std::max(6, w.start_radius - w.shrink_per_day * day);
        const Mask mask = wound_mask(radius);
        const seg::ComponentSet comps = seg::extract_components(mask, params);

        care::WoundEntryInput e;
        e.wound_id = wounds[i].id;
        e.image_ref = put(st, encode_png(wound_photo(radius)));
        e.confirmed = true;
        e.questionnaire = care::WoundQuestionnaire{nrs(w.start_pain - day / 2, "pain"),
                                                   nrs(3 - day / 5, "itching"), nrs(4 - day / 4, "exudate")};
        care::SegmentationSummary s;
        s.mask_ref = put(st, encode_mask_png(mask));
        s.threshold = params.threshold;
        s.crop_rect = seg::crop_rect_for(image_side, image_side);
        for (const auto& c : comps.components) s.component_pixel_counts.push_back(c.pixel_count);
        s.dropped_px = comps.dropped_px;
        e.segmentation = std::move(s);
        e.reference = ruler;
        sub.wounds.push_back(std::move(e));
      }
      out.documentation_ids.push_back(care::record_documentation(st, sub).record.id);
    }
  }

  // A week of morning slots after the documentation period.
  const Timestamp first_slot = demo_base() + std::chrono::days(demo_days);
  for (int day = 0; day < 7; ++day)
    for (int hour = 0; hour < 3; ++hour) {
      const Timestamp start = first_slot + std::chrono::days(day) + std::chrono::hours(hour);
      out.slot_ids.push_back(scheduling::create_slot(st, demo_clinician, start, start + 30min).id);
    }
  scheduling::book_slot(st, out.slot_ids[0], out.patient_ids[0]);
  scheduling::confirm(st, out.slot_ids[0], demo_clinician);
  scheduling::book_slot(st, out.slot_ids[4], out.patient_ids[1]);
  return out;
}

nlohmann::json to_json(const DemoSummary& s) {
  nlohmann::json accounts = nlohmann::json::array();
  for (const auto& a : s.accounts)
    accounts.push_back(
        {{"username", a.username}, {"password", a.password}, {"role", a.role}, {"principal_id", a.principal_id}});
  return {{"accounts", accounts},
          {"patients", s.patient_ids},
          {"wounds", s.wound_ids},
          {"documentations", s.documentation_ids.size()},
          {"slots", s.slot_ids.size()}};
}

}  // namespace woundctl

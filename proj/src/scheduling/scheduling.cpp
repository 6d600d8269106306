#include "woundcare/scheduling.hpp"

#include <algorithm>
#include <cstdio>

#include "woundcare/crypto.hpp"
#include "woundcare/error.hpp"

namespace woundcare::scheduling {
namespace {

constexpr const char* slots_collection = "slots";
constexpr const char* holds_collection = "patient_holds";
constexpr const char* audit_collection = "audit";

// A hold whose slot never reached the patient is garbage after this long.
constexpr std::chrono::seconds stale_hold_age{60};

SlotState target_of(Action a) {
  switch (a) {
    case Action::book: return SlotState::booked;
    case Action::confirm: return SlotState::confirmed;
    case Action::cancel: return SlotState::cancelled;
    case Action::complete: return SlotState::completed;
    case Action::recycle: return SlotState::available;
  }
  return SlotState::available;
}

std::string padded_id(const char* prefix, std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06llu", prefix, static_cast<unsigned long long>(n));
  return buf;
}

Slot load(const store::Store& st, const std::string& slot_id) {
  const auto doc = st.find(slots_collection, slot_id);
  if (!doc) throw Error(ErrorCode::not_found, "unknown slot " + slot_id, "slot_id");
  return slot_from_json(doc->body, doc->version);
}

Json stored_body(const Slot& s) {
  Json j = to_json(s);
  j.erase("version");
  return j;
}

Slot write(store::Store& st, const Slot& before, const Slot& after) {
  const auto doc = st.atomic_update(slots_collection, before.id, before.version, stored_body(after));
  Slot out = after;
  out.version = doc.version;
  return out;
}

Slot moved(const Slot& s, SlotState to) {
  Slot out = s;
  out.state = to;
  if (to == SlotState::available) out.patient_id.clear();
  return out;
}

void audit(store::Store& st, const Actor& actor, Action action, const Slot& before) {
  const auto n = st.next_sequence(audit_collection);
  st.put(audit_collection, padded_id("evt", n),
         Json{{"actor_id", actor.id},
              {"role", to_string(actor.role)},
              {"action", to_string(action)},
              {"slot_id", before.id},
              {"from", to_string(before.state)},
              {"patient_id", before.patient_id},
              {"at", format_rfc3339(now_utc())}});
}

void release_hold(store::Store& st, const std::string& patient_id, const std::string& slot_id) {
  if (patient_id.empty()) return;
  st.update(holds_collection, patient_id, [&](const std::optional<store::Document>& cur) {
    Json holds = Json::array();
    if (cur)
      for (const auto& h : cur->body["holds"])
        if (h["slot_id"] != slot_id) holds.push_back(h);
    return Json{{"holds", holds}};
  });
}

bool hold_is_live(const store::Store& st, const Json& h, const std::string& patient_id, Timestamp now) {
  const auto doc = st.find(slots_collection, h["slot_id"].get<std::string>());
  if (doc) {
    const Slot s = slot_from_json(doc->body, doc->version);
    if (s.holds_patient() && s.patient_id == patient_id) return true;
  }
  return now - parse_rfc3339(h["reserved_at"].get<std::string>()) < stale_hold_age;
}

// Reserves the slot's interval on the patient's hold list; two overlapping holds can never coexist.
void reserve_hold(store::Store& st, const Slot& slot, const std::string& patient_id) {
  const Timestamp now = now_utc();
  st.update(holds_collection, patient_id, [&](const std::optional<store::Document>& cur) {
    Json holds = Json::array();
    if (cur) {
      for (const auto& h : cur->body["holds"]) {
        if (h["slot_id"] == slot.id) continue;
        if (!hold_is_live(st, h, patient_id, now)) continue;
        const Timestamp hs = parse_rfc3339(h["start"].get<std::string>());
        const Timestamp he = parse_rfc3339(h["end"].get<std::string>());
        if (slot.start < he && hs < slot.end) {
          throw Error(ErrorCode::overlap_conflict,
                      "patient " + patient_id + " already holds overlapping appointment " +
                          h["slot_id"].get<std::string>(),
                      "slot_id");
        }
        holds.push_back(h);
      }
    }
    holds.push_back({{"slot_id", slot.id},
                     {"start", format_rfc3339(slot.start)},
                     {"end", format_rfc3339(slot.end)},
                     {"reserved_at", format_rfc3339(now)}});
    return Json{{"holds", holds}};
  });
}

// Re-reads and retries when another writer bumps the version in between.
template <class Fn>
Slot cas_loop(store::Store& st, const std::string& slot_id, Fn&& step) {
  for (;;) {
    const Slot cur = load(st, slot_id);
    const Slot next = step(cur);
    try {
      return write(st, cur, next);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::conflict) throw;
    }
  }
}

}  // namespace

std::string_view to_string(SlotState s) {
  switch (s) {
    case SlotState::available: return "available";
    case SlotState::booked: return "booked";
    case SlotState::confirmed: return "confirmed";
    case SlotState::completed: return "completed";
    case SlotState::cancelled: return "cancelled";
  }
  return "unknown";
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::book: return "book";
    case Action::confirm: return "confirm";
    case Action::cancel: return "cancel";
    case Action::complete: return "complete";
    case Action::recycle: return "recycle";
  }
  return "unknown";
}

SlotState slot_state_from_string(std::string_view s) {
  for (SlotState st : all_states)
    if (to_string(st) == s) return st;
  throw Error(ErrorCode::invalid_argument, "unknown slot state \"" + std::string(s) + "\"", "state");
}

std::string_view to_string(Role r) { return r == Role::patient ? "patient" : "clinician"; }

Role role_from_string(std::string_view s) {
  if (s == "patient") return Role::patient;
  if (s == "clinician") return Role::clinician;
  throw Error(ErrorCode::invalid_argument, "unknown role \"" + std::string(s) + "\"", "role");
}

std::optional<SlotState> next_state(SlotState from, Action action) {
  switch (action) {
    case Action::book:
      if (from == SlotState::available) return SlotState::booked;
      break;
    case Action::confirm:
      if (from == SlotState::booked) return SlotState::confirmed;
      break;
    case Action::cancel:
      if (from == SlotState::booked || from == SlotState::confirmed) return SlotState::cancelled;
      break;
    case Action::complete:
      if (from == SlotState::confirmed) return SlotState::completed;
      break;
    case Action::recycle:
      if (from == SlotState::cancelled) return SlotState::available;
      break;
  }
  return std::nullopt;
}

SlotState transition(SlotState from, Action action) {
  if (auto to = next_state(from, action)) return *to;
  throw Error(ErrorCode::transition,
              "illegal transition from " + std::string(to_string(from)) + " to " +
                  std::string(to_string(target_of(action))),
              "state");
}

bool Slot::holds_patient() const noexcept {
  return state == SlotState::booked || state == SlotState::confirmed || state == SlotState::completed;
}

Slot create_slot(store::Store& st, const std::string& clinician_id, Timestamp start, Timestamp end) {
  if (clinician_id.empty()) throw Error(ErrorCode::invalid_argument, "clinician id required", "clinician_id");
  if (end <= start) throw Error(ErrorCode::invalid_argument, "slot must end after it starts", "end");
  Slot s;
  s.id = padded_id("slt", st.next_sequence(slots_collection));
  s.clinician_id = clinician_id;
  s.start = start;
  s.end = end;
  s.version = st.create(slots_collection, s.id, stored_body(s)).version;
  return s;
}

Slot get_slot(const store::Store& st, const std::string& slot_id) { return load(st, slot_id); }

std::vector<DayGroup> list_slots(const store::Store& st, const SlotQuery& q) {
  if (q.from && q.to && *q.to < *q.from)
    throw Error(ErrorCode::invalid_argument, "range ends before it starts", "to");
  std::vector<Slot> slots;
  for (const auto& doc : st.list(slots_collection)) {
    Slot s = slot_from_json(doc.body, doc.version);
    if (!q.clinician_id.empty() && s.clinician_id != q.clinician_id) continue;
    const Date d = date_of(s.start);
    if ((q.from && d < *q.from) || (q.to && *q.to < d)) continue;
    slots.push_back(std::move(s));
  }
  std::sort(slots.begin(), slots.end(),
            [](const Slot& a, const Slot& b) { return std::tie(a.start, a.id) < std::tie(b.start, b.id); });
  std::vector<DayGroup> out;
  for (auto& s : slots) {
    const Date d = date_of(s.start);
    if (out.empty() || out.back().day != d) out.push_back({d, {}});
    out.back().slots.push_back(std::move(s));
  }
  return out;
}

Slot book_slot(store::Store& st, const std::string& slot_id, const std::string& patient_id) {
  if (patient_id.empty()) throw Error(ErrorCode::invalid_argument, "patient id required", "patient_id");
  const Slot cur = load(st, slot_id);
  if (cur.state != SlotState::available)
    throw Error(ErrorCode::conflict, "slot " + slot_id + " is " + std::string(to_string(cur.state)), "slot_id");
  Slot next = moved(cur, transition(cur.state, Action::book));
  next.patient_id = patient_id;

  reserve_hold(st, cur, patient_id);
  try {
    return write(st, cur, next);
  } catch (...) {
    release_hold(st, patient_id, slot_id);
    throw;
  }
}

Slot confirm(store::Store& st, const std::string& slot_id, const std::string& clinician_id) {
  return cas_loop(st, slot_id, [&](const Slot& cur) {
    if (cur.clinician_id != clinician_id)
      throw Error(ErrorCode::forbidden, "slot belongs to another clinician", "slot_id");
    return moved(cur, transition(cur.state, Action::confirm));
  });
}

Slot complete(store::Store& st, const std::string& slot_id, const std::string& clinician_id) {
  return cas_loop(st, slot_id, [&](const Slot& cur) {
    if (cur.clinician_id != clinician_id)
      throw Error(ErrorCode::forbidden, "slot belongs to another clinician", "slot_id");
    return moved(cur, transition(cur.state, Action::complete));
  });
}

Slot cancel(store::Store& st, const std::string& slot_id, const Actor& actor) {
  Slot before;
  const Slot cancelled = cas_loop(st, slot_id, [&](const Slot& cur) {
    const bool owner = actor.role == Role::patient ? cur.patient_id == actor.id : cur.clinician_id == actor.id;
    if (!owner) throw Error(ErrorCode::forbidden, "not a party to this appointment", "slot_id");
    before = cur;
    return moved(cur, transition(cur.state, Action::cancel));
  });
  audit(st, actor, Action::cancel, before);
  const Slot recycled = write(st, cancelled, moved(cancelled, transition(cancelled.state, Action::recycle)));
  release_hold(st, before.patient_id, slot_id);
  return recycled;
}

VideoSession issue_video_session(const Slot& slot, Timestamp now) {
  if (slot.state != SlotState::confirmed)
    throw Error(ErrorCode::not_confirmed, "appointment " + slot.id + " is " + std::string(to_string(slot.state)),
                "appointment_id");
  const Timestamp from = slot.start - join_lead_time;
  if (now < from || slot.end < now)
    throw Error(ErrorCode::outside_window,
                "join window is " + format_rfc3339(from) + " to " + format_rfc3339(slot.end), "now");
  return {slot.id, crypto::random_token(), now, from, slot.end};
}

VideoSession issue_video_session(const store::Store& st, const std::string& slot_id, Timestamp now) {
  return issue_video_session(load(st, slot_id), now);
}

Json to_json(const Slot& s) {
  Json j{{"id", s.id},
         {"clinician_id", s.clinician_id},
         {"start", format_rfc3339(s.start)},
         {"end", format_rfc3339(s.end)},
         {"state", to_string(s.state)},
         {"patient_id", s.patient_id.empty() ? Json(nullptr) : Json(s.patient_id)}};
  if (s.version) j["version"] = s.version;
  return j;
}

Slot slot_from_json(const Json& j, std::uint64_t version) {
  Slot s;
  s.id = j.at("id").get<std::string>();
  s.clinician_id = j.at("clinician_id").get<std::string>();
  s.start = parse_rfc3339(j.at("start").get<std::string>());
  s.end = parse_rfc3339(j.at("end").get<std::string>());
  s.state = slot_state_from_string(j.at("state").get<std::string>());
  if (j.contains("patient_id") && j["patient_id"].is_string()) s.patient_id = j["patient_id"].get<std::string>();
  s.version = version;
  return s;
}

Json to_json(const DayGroup& g) {
  Json slots = Json::array();
  for (const auto& s : g.slots) slots.push_back(to_json(s));
  return {{"date", format_date(g.day)}, {"slots", slots}};
}

Json to_json(const VideoSession& v) {
  return {{"appointment_id", v.appointment_id},
          {"token", v.token},
          {"issued_at", format_rfc3339(v.issued_at)},
          {"valid_from", format_rfc3339(v.valid_from)},
          {"valid_until", format_rfc3339(v.valid_until)}};
}

}  // namespace woundcare::scheduling

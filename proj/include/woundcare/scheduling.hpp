#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "woundcare/store.hpp"
#include "woundcare/timeutil.hpp"

namespace woundcare::scheduling {

using Json = nlohmann::json;

enum class SlotState { available, booked, confirmed, completed, cancelled };
enum class Action { book, confirm, cancel, complete, recycle };

inline constexpr std::array<SlotState, 5> all_states = {SlotState::available, SlotState::booked, SlotState::confirmed,
                                                        SlotState::completed, SlotState::cancelled};
inline constexpr std::array<Action, 5> all_actions = {Action::book, Action::confirm, Action::cancel, Action::complete,
                                                      Action::recycle};

std::string_view to_string(SlotState s);
std::string_view to_string(Action a);
SlotState slot_state_from_string(std::string_view s);

/// Target state of a legal move, nullopt otherwise.
std::optional<SlotState> next_state(SlotState from, Action action);
/// Throws ErrorCode::transition naming both states.
SlotState transition(SlotState from, Action action);

/// A calendar slot; once booked it is also the appointment.
struct Slot {
  std::string id;
  std::string clinician_id;
  Timestamp start;
  Timestamp end;
  SlotState state = SlotState::available;
  std::string patient_id;
  std::uint64_t version = 0;

  bool holds_patient() const noexcept;
  bool overlaps(const Slot& other) const noexcept { return start < other.end && other.start < end; }
};

enum class Role { patient, clinician };
std::string_view to_string(Role r);
Role role_from_string(std::string_view s);

struct Actor {
  std::string id;
  Role role = Role::patient;
};

struct DayGroup {
  Date day;
  std::vector<Slot> slots;
};

struct VideoSession {
  std::string appointment_id;
  std::string token;
  Timestamp issued_at;
  Timestamp valid_from;
  Timestamp valid_until;
};

inline constexpr std::chrono::minutes join_lead_time{15};

/// Inclusive calendar days; empty clinician id means every clinician.
struct SlotQuery {
  std::string clinician_id;
  std::optional<Date> from;
  std::optional<Date> to;
};

Slot create_slot(store::Store& st, const std::string& clinician_id, Timestamp start, Timestamp end);
Slot get_slot(const store::Store& st, const std::string& slot_id);
std::vector<DayGroup> list_slots(const store::Store& st, const SlotQuery& q);

/// Single compare-and-swap attempt; a lost race is ErrorCode::conflict.
Slot book_slot(store::Store& st, const std::string& slot_id, const std::string& patient_id);
Slot confirm(store::Store& st, const std::string& slot_id, const std::string& clinician_id);
/// Passes through cancelled and lands on available again. Returns the recycled slot.
Slot cancel(store::Store& st, const std::string& slot_id, const Actor& actor);
Slot complete(store::Store& st, const std::string& slot_id, const std::string& clinician_id);

VideoSession issue_video_session(const Slot& slot, Timestamp now);
VideoSession issue_video_session(const store::Store& st, const std::string& slot_id, Timestamp now);

Json to_json(const Slot& s);
Slot slot_from_json(const Json& j, std::uint64_t version = 0);
Json to_json(const DayGroup& g);
Json to_json(const VideoSession& v);

}  // namespace woundcare::scheduling

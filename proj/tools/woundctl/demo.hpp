#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "woundcare/timeutil.hpp"

namespace woundctl {

struct DemoAccount {
  std::string username;
  std::string password;
  std::string role;
  std::string principal_id;
};

struct DemoSummary {
  std::vector<DemoAccount> accounts;
  std::vector<std::string> patient_ids;
  std::vector<std::string> wound_ids;
  std::vector<std::string> documentation_ids;
  std::vector<std::string> slot_ids;
};

inline constexpr int demo_days = 14;
inline constexpr const char* demo_clinician = "clin-0001";

/// First demo day, 09:00 UTC on each day thereafter.
woundcare::Timestamp demo_base();

/// Seeds an empty store: 2 patients, 3 wounds, 14 days of documentations with
/// segmented synthetic images and reference annotations, one clinician and a week of slots.
/// A store that already holds patients is ErrorCode::conflict.
DemoSummary seed_demo(const std::filesystem::path& data_dir, bool fsync = true);

nlohmann::json to_json(const DemoSummary& s);

}  // namespace woundctl

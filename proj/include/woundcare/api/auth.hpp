#pragma once

#include <chrono>
#include <optional>
#include <string>

#include "woundcare/scheduling.hpp"
#include "woundcare/store.hpp"
#include "woundcare/timeutil.hpp"

namespace woundcare::api {

using scheduling::Role;

/// Authenticated caller. `principal_id` is a patient id for patients and a clinician id for clinicians.
struct Principal {
  std::string username;
  Role role = Role::patient;
  std::string principal_id;
};

struct Session {
  std::string token;
  Principal principal;
  Timestamp expires_at;
};

inline constexpr int default_pbkdf2_iterations = 100000;

/// Stores a salted PBKDF2 hash; an existing username is ErrorCode::conflict.
void create_user(store::Store& st, const std::string& username, const std::string& password, Role role,
                 const std::string& principal_id, int iterations = default_pbkdf2_iterations);

/// Throws ErrorCode::unauthorized for an unknown user or a wrong password.
Session login(store::Store& st, const std::string& username, const std::string& password, std::chrono::seconds ttl,
              Timestamp now = now_utc());

/// Resolves a bearer token; only its SHA-256 digest is persisted. Throws ErrorCode::unauthorized.
Principal authenticate(const store::Store& st, const std::string& token, Timestamp now = now_utc());

}  // namespace woundcare::api

#include "woundcare/api/auth.hpp"

#include "woundcare/crypto.hpp"
#include "woundcare/error.hpp"

namespace woundcare::api {
namespace {

constexpr const char* users_collection = "users";
constexpr const char* sessions_collection = "sessions";

Error bad_credentials() { return Error(ErrorCode::unauthorized, "invalid username or password"); }

}  // namespace

void create_user(store::Store& st, const std::string& username, const std::string& password, Role role,
                 const std::string& principal_id, int iterations) {
  if (username.empty()) throw Error(ErrorCode::invalid_argument, "username required", "username");
  if (password.empty()) throw Error(ErrorCode::invalid_argument, "password required", "password");
  if (principal_id.empty()) throw Error(ErrorCode::invalid_argument, "principal id required", "principal_id");
  if (iterations < 1) throw Error(ErrorCode::range, "iterations must be positive", "iterations");
  const std::string salt = crypto::base64url(crypto::random_bytes(16));
  st.create(users_collection, username,
            {{"username", username},
             {"role", scheduling::to_string(role)},
             {"principal_id", principal_id},
             {"salt", salt},
             {"iterations", iterations},
             {"password_hash", crypto::pbkdf2_hex(password, salt, iterations)}});
}

Session login(store::Store& st, const std::string& username, const std::string& password, std::chrono::seconds ttl,
              Timestamp now) {
  if (username.empty()) throw bad_credentials();
  std::optional<store::Document> user;
  try {
    user = st.find(users_collection, username);
  } catch (const Error&) {
    throw bad_credentials();
  }
  if (!user) throw bad_credentials();
  const auto& u = user->body;
  const std::string hash = crypto::pbkdf2_hex(password, u.at("salt").get<std::string>(), u.at("iterations").get<int>());
  if (!crypto::constant_time_equal(hash, u.at("password_hash").get<std::string>())) throw bad_credentials();

  Session s;
  s.token = crypto::random_token();
  s.principal = {username, scheduling::role_from_string(u.at("role").get<std::string>()),
                 u.at("principal_id").get<std::string>()};
  s.expires_at = now + ttl;
  st.put(sessions_collection, crypto::sha256_hex(s.token),
         {{"username", username},
          {"role", u.at("role")},
          {"principal_id", s.principal.principal_id},
          {"expires_at", format_rfc3339(s.expires_at)}});
  return s;
}

Principal authenticate(const store::Store& st, const std::string& token, Timestamp now) {
  if (token.empty()) throw Error(ErrorCode::unauthorized, "missing bearer token");
  const auto doc = st.find(sessions_collection, crypto::sha256_hex(token));
  if (!doc) throw Error(ErrorCode::unauthorized, "unknown or revoked token");
  const auto& b = doc->body;
  if (parse_rfc3339(b.at("expires_at").get<std::string>()) <= now)
    throw Error(ErrorCode::unauthorized, "session expired");
  return {b.at("username").get<std::string>(), scheduling::role_from_string(b.at("role").get<std::string>()),
          b.at("principal_id").get<std::string>()};
}

}  // namespace woundcare::api

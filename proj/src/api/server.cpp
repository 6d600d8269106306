#include "woundcare/api/server.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <thread>

#include "woundcare/api/auth.hpp"
#include "woundcare/care/documentation.hpp"
#include "woundcare/care/help.hpp"
#include "woundcare/scheduling.hpp"
#include "woundcare/seg/image.hpp"
#include "woundcare/seg/pipeline.hpp"

namespace woundcare::api {
namespace {

using Json = nlohmann::json;
using httplib::Request;
using httplib::Response;

constexpr const char* json_type = "application/json";

void send(Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), json_type);
}

void send_error(Response& res, const Error& e) {
  Json body{{"error", to_string(e.code())}, {"message", e.what()}};
  if (!e.field().empty()) body["field"] = e.field();
  send(res, http_status(e.code()), body);
}

Json parse_body(const Request& req) {
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::format, std::string("request body is not valid JSON: ") + e.what(), "body");
  }
}

template <class T>
T body_field(const Json& j, const std::string& key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::invalid_argument, key + " is required", key);
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::invalid_argument, key + " has the wrong type", key);
  }
}

Timestamp timestamp_field(const Json& j, const std::string& key) {
  const auto text = body_field<std::string>(j, key);
  try {
    return parse_rfc3339(text);
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), key);
  }
}

std::optional<Date> date_param(const Request& req, const std::string& key) {
  if (!req.has_param(key)) return std::nullopt;
  try {
    return parse_date(req.get_param_value(key));
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), key);
  }
}

care::DateRange range_params(const Request& req) {
  care::DateRange r{date_param(req, "from"), date_param(req, "to")};
  r.validate();
  return r;
}

std::string image_url(const std::string& ref) { return "/api/v1/images/" + ref; }

[[noreturn]] void forbid(const std::string& what) { throw Error(ErrorCode::forbidden, "no access to " + what); }

bool may_access(const Principal& p, const care::Patient& patient) {
  if (p.role == Role::patient) return p.principal_id == patient.id;
  return std::find(patient.clinician_ids.begin(), patient.clinician_ids.end(), p.principal_id) !=
         patient.clinician_ids.end();
}

Json with_image_urls(Json record) {
  for (auto& w : record["wounds"]) {
    w["image_url"] = image_url(w["image_ref"].get<std::string>());
    if (w.contains("segmentation") && w["segmentation"].is_object())
      w["mask_url"] = image_url(w["segmentation"]["mask_ref"].get<std::string>());
  }
  return record;
}

}  // namespace

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::format:
    case ErrorCode::range:
    case ErrorCode::incomplete_submission:
    case ErrorCode::quality_unconfirmed:
      return 400;
    case ErrorCode::unauthorized: return 401;
    case ErrorCode::forbidden: return 403;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict:
    case ErrorCode::overlap_conflict:
      return 409;
    case ErrorCode::payload_too_large: return 413;
    case ErrorCode::transition:
    case ErrorCode::not_confirmed:
    case ErrorCode::outside_window:
      return 422;
    case ErrorCode::io: return 500;
  }
  return 500;
}

struct Server::Impl {
  ServiceConfig config;
  std::shared_ptr<store::Store> store;
  std::shared_ptr<const topformer::Model> model;
  httplib::Server http;
  std::thread thread;
  std::atomic<int> bound_port{-1};

  store::Store& st() { return *store; }

  Principal principal(const Request& req) {
    const std::string header = req.get_header_value("Authorization");
    constexpr std::string_view scheme = "Bearer ";
    if (header.size() <= scheme.size() || header.compare(0, scheme.size(), scheme) != 0)
      throw Error(ErrorCode::unauthorized, "missing bearer token");
    return authenticate(st(), header.substr(scheme.size()));
  }

  care::Patient patient_for(const Principal& p, const std::string& patient_id) {
    const care::Patient patient = care::get_patient(st(), patient_id);
    if (!may_access(p, patient)) forbid("patient " + patient_id);
    return patient;
  }

  care::WoundRecord wound_for(const Principal& p, const std::string& wound_id) {
    const care::WoundRecord w = care::get_wound(st(), wound_id);
    patient_for(p, w.patient_id);
    return w;
  }

  Principal clinician(const Request& req) {
    Principal p = principal(req);
    if (p.role != Role::clinician) forbid("clinician endpoints");
    return p;
  }

  using Handler = std::function<void(const Request&, Response&)>;

  Handler guarded(Handler h) {
    return [h = std::move(h)](const Request& req, Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send(res, 500, {{"error", "io"}, {"message", e.what()}});
      }
    };
  }

  void routes();
  void submit_documentation(const Request& req, Response& res);
  Json documentation_response(const care::DocumentationRecord& r, bool replayed);
};

Json Server::Impl::documentation_response(const care::DocumentationRecord& r, bool replayed) {
  Json wounds = Json::array();
  for (const auto& w : r.wounds) {
    wounds.push_back({{"wound_id", w.wound_id},
                      {"image_ref", w.image_ref},
                      {"mask_ref", w.segmentation ? Json(w.segmentation->mask_ref) : Json(nullptr)},
                      {"size", w.size ? care::to_json(*w.size) : Json(nullptr)}});
  }
  return {{"record_id", r.id}, {"replayed", replayed}, {"wounds", wounds}, {"record", care::to_json(r)}};
}

void Server::Impl::submit_documentation(const Request& req, Response& res) {
  const Principal p = principal(req);
  const std::string patient_id = req.matches[1];
  if (p.role != Role::patient) forbid("documentation submission");
  patient_for(p, patient_id);

  const std::string idem = req.get_header_value("Idempotency-Key");
  if (!idem.empty()) {
    if (auto prior = care::find_replay(st(), patient_id, idem)) {
      send(res, 200, documentation_response(*prior, true));
      return;
    }
  }

  if (!req.is_multipart_form_data() || !req.has_file("manifest"))
    throw Error(ErrorCode::invalid_argument, "multipart body with a \"manifest\" part is required", "manifest");
  Json manifest;
  try {
    manifest = Json::parse(req.get_file_value("manifest").content);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::format, std::string("manifest is not valid JSON: ") + e.what(), "manifest");
  }
  if (!manifest.is_object()) throw Error(ErrorCode::invalid_argument, "manifest must be an object", "manifest");

  care::DocumentationSubmission sub;
  sub.patient_id = patient_id;
  sub.idempotency_key = idem;
  sub.timestamp = manifest.contains("timestamp") ? timestamp_field(manifest, "timestamp") : now_utc();
  if (manifest.contains("feedback_mode")) {
    try {
      sub.feedback_mode = seg::feedback_mode_from_string(body_field<std::string>(manifest, "feedback_mode"));
    } catch (const Error& e) {
      throw Error(e.code(), e.what(), "feedback_mode");
    }
  }
  if (manifest.contains("general_questionnaire") && !manifest["general_questionnaire"].is_null())
    sub.general = care::general_questionnaire_from_json(manifest["general_questionnaire"], "general_questionnaire");

  const Json wounds = manifest.value("wounds", Json::array());
  if (!wounds.is_array()) throw Error(ErrorCode::invalid_argument, "wounds must be an array", "wounds");
  std::vector<RgbImage> images;
  for (std::size_t i = 0; i < wounds.size(); ++i) {
    const Json& w = wounds[i];
    const std::string path = "wounds[" + std::to_string(i) + "]";
    if (!w.is_object()) throw Error(ErrorCode::invalid_argument, path + " must be an object", path);
    care::WoundEntryInput e;
    if (w.contains("wound_id") && w["wound_id"].is_string()) e.wound_id = w["wound_id"];
    e.confirmed = w.value("confirmed", false);
    if (w.contains("questionnaire") && !w["questionnaire"].is_null())
      e.questionnaire = care::wound_questionnaire_from_json(w["questionnaire"], path + ".questionnaire");
    if (w.contains("reference") && !w["reference"].is_null())
      e.reference = care::reference_from_json(w["reference"], path + ".reference");

    const std::string part = w.value("image", std::string());
    if (part.empty() || !req.has_file(part))
      throw Error(ErrorCode::invalid_argument, path + ".image must name an uploaded part", path + ".image");
    const auto& file = req.get_file_value(part);
    if (file.content.size() > config.upload_limit_bytes)
      throw Error(ErrorCode::payload_too_large,
                  "image exceeds " + std::to_string(config.upload_limit_bytes) + " bytes", path + ".image");
    const std::span bytes(reinterpret_cast<const std::uint8_t*>(file.content.data()), file.content.size());
    try {
      images.push_back(decode_image(bytes));
    } catch (const Error& err) {
      throw Error(err.code(), err.what(), path + ".image");
    }
    e.image_ref = st().put_blob(bytes, sniff_media_type(bytes));
    sub.wounds.push_back(std::move(e));
  }

  care::validate_submission(st(), sub);

  if (model) {
    seg::SegmentationParams params;
    params.threshold = config.threshold;
    params.feedback_mode = sub.feedback_mode;
    for (std::size_t i = 0; i < sub.wounds.size(); ++i) {
      const seg::SegmentationResult r = seg::segment(*model, images[i], params);
      const auto png = encode_mask_png(r.mask);
      care::SegmentationSummary s;
      s.mask_ref = st().put_blob(png, "image/png");
      s.threshold = params.threshold;
      s.crop_rect = r.crop_rect;
      for (const auto& c : r.components) s.component_pixel_counts.push_back(c.pixel_count);
      s.dropped_px = r.dropped_px;
      sub.wounds[i].segmentation = std::move(s);
    }
  }
  const care::RecordOutcome out = care::record_documentation(st(), sub);
  send(res, out.replayed ? 200 : 201, documentation_response(out.record, out.replayed));
}

void Server::Impl::routes() {
  http.Get("/healthz", [](const Request&, Response& res) { send(res, 200, {{"status", "ok"}}); });

  http.Post("/api/v1/auth/login", guarded([this](const Request& req, Response& res) {
              const Json b = parse_body(req);
              const Session s = login(st(), body_field<std::string>(b, "username"),
                                      body_field<std::string>(b, "password"), config.session_ttl);
              send(res, 200,
                   {{"token", s.token},
                    {"role", scheduling::to_string(s.principal.role)},
                    {"principal_id", s.principal.principal_id},
                    {"expires_at", format_rfc3339(s.expires_at)}});
            }));

  http.Get(R"(/api/v1/patients/([^/]+)/overview)", guarded([this](const Request& req, Response& res) {
             const Principal p = principal(req);
             patient_for(p, req.matches[1]);
             send(res, 200, care::to_json(care::patient_overview(st(), req.matches[1])));
           }));

  http.Post(R"(/api/v1/patients/([^/]+)/documentations)",
            guarded([this](const Request& req, Response& res) { submit_documentation(req, res); }));

  http.Get(R"(/api/v1/wounds/([^/]+)/gallery)", guarded([this](const Request& req, Response& res) {
             wound_for(principal(req), req.matches[1]);
             Json g = care::to_json(care::gallery(st(), req.matches[1]));
             for (auto& item : g["items"]) {
               item["image_url"] = image_url(item["image_ref"].get<std::string>());
               if (item["mask_ref"].is_string()) item["mask_url"] = image_url(item["mask_ref"].get<std::string>());
             }
             send(res, 200, g);
           }));

  http.Get(R"(/api/v1/wounds/([^/]+)/trajectory)", guarded([this](const Request& req, Response& res) {
             wound_for(principal(req), req.matches[1]);
             send(res, 200, care::to_json(care::wound_trajectory(st(), req.matches[1], range_params(req))));
           }));

  http.Get(R"(/api/v1/patients/([^/]+)/trajectory/general)", guarded([this](const Request& req, Response& res) {
             patient_for(principal(req), req.matches[1]);
             send(res, 200, care::to_json(care::general_trajectory(st(), req.matches[1], range_params(req))));
           }));

  http.Get("/api/v1/appointments/slots", guarded([this](const Request& req, Response& res) {
             const Principal p = principal(req);
             scheduling::SlotQuery q;
             q.clinician_id = req.has_param("clinician_id") ? req.get_param_value("clinician_id") : "";
             q.from = date_param(req, "from");
             q.to = date_param(req, "to");
             Json days = Json::array();
             for (const auto& g : scheduling::list_slots(st(), q)) {
               Json day = scheduling::to_json(g);
               if (p.role == Role::patient) {
                 for (auto& s : day["slots"])
                   if (s["patient_id"] != p.principal_id) s["patient_id"] = nullptr;
               }
               days.push_back(std::move(day));
             }
             send(res, 200, {{"days", days}});
           }));

  http.Post("/api/v1/appointments", guarded([this](const Request& req, Response& res) {
              const Principal p = principal(req);
              const Json b = parse_body(req);
              std::string patient_id = p.principal_id;
              if (p.role == Role::clinician) {
                patient_id = body_field<std::string>(b, "patient_id");
                patient_for(p, patient_id);
              } else if (b.contains("patient_id") && b["patient_id"] != p.principal_id) {
                forbid("booking for another patient");
              }
              send(res, 201, scheduling::to_json(scheduling::book_slot(st(), body_field<std::string>(b, "slot_id"),
                                                                       patient_id)));
            }));

  http.Post(R"(/api/v1/appointments/([^/]+)/confirm)", guarded([this](const Request& req, Response& res) {
              const Principal p = clinician(req);
              send(res, 200, scheduling::to_json(scheduling::confirm(st(), req.matches[1], p.principal_id)));
            }));

  http.Delete(R"(/api/v1/appointments/([^/]+))", guarded([this](const Request& req, Response& res) {
                const Principal p = principal(req);
                const scheduling::Actor actor{p.principal_id, p.role};
                send(res, 200, scheduling::to_json(scheduling::cancel(st(), req.matches[1], actor)));
              }));

  http.Post(R"(/api/v1/appointments/([^/]+)/video-session)", guarded([this](const Request& req, Response& res) {
              const Principal p = principal(req);
              const scheduling::Slot s = scheduling::get_slot(st(), req.matches[1]);
              const bool party = p.role == Role::patient ? s.patient_id == p.principal_id
                                                         : s.clinician_id == p.principal_id;
              if (!party) forbid("appointment " + s.id);
              send(res, 201, scheduling::to_json(scheduling::issue_video_session(s, now_utc())));
            }));

  http.Get("/api/v1/clinician/patients", guarded([this](const Request& req, Response& res) {
             const Principal p = clinician(req);
             Json rows = Json::array();
             for (const auto& patient : care::list_patients(st())) {
               if (!may_access(p, patient)) continue;
               const auto docs = care::list_documentations(st(), patient.id);
               Json row = care::to_json(patient);
               row["documentation_count"] = docs.size();
               row["last_documented_at"] = docs.empty() ? Json(nullptr) : Json(format_rfc3339(docs.back().timestamp));
               rows.push_back(std::move(row));
             }
             send(res, 200, {{"patients", rows}});
           }));

  http.Post("/api/v1/clinician/slots", guarded([this](const Request& req, Response& res) {
              const Principal p = clinician(req);
              const Json b = parse_body(req);
              send(res, 201, scheduling::to_json(scheduling::create_slot(st(), p.principal_id,
                                                                         timestamp_field(b, "start"),
                                                                         timestamp_field(b, "end"))));
            }));

  http.Get(R"(/api/v1/documentations/([^/]+))", guarded([this](const Request& req, Response& res) {
             const Principal p = principal(req);
             const auto record = care::get_documentation(st(), req.matches[1]);
             patient_for(p, record.patient_id);
             send(res, 200, with_image_urls(care::to_json(record)));
           }));

  http.Post(R"(/api/v1/documentations/([^/]+)/ro-annotation)", guarded([this](const Request& req, Response& res) {
              const Principal p = clinician(req);
              const auto record = care::get_documentation(st(), req.matches[1]);
              patient_for(p, record.patient_id);
              const Json b = parse_body(req);
              const auto ro = care::reference_from_json(b, "");
              const auto size = care::annotate_reference(st(), record.id, body_field<std::string>(b, "wound_id"), ro);
              send(res, 200, {{"record_id", record.id}, {"wound_id", b["wound_id"]}, {"size", care::to_json(size)}});
            }));

  http.Get(R"(/api/v1/images/([0-9a-f]{64}))", guarded([this](const Request& req, Response& res) {
             const Principal p = principal(req);
             const std::string ref = req.matches[1];
             const auto owners = care::blob_owners(st(), ref);
             if (owners.empty()) throw Error(ErrorCode::not_found, "unknown image " + ref, "blob");
             bool allowed = false;
             for (const auto& pid : owners) allowed = allowed || may_access(p, care::get_patient(st(), pid));
             if (!allowed) forbid("image " + ref);
             const store::Blob blob = st().get_blob(ref);
             res.status = 200;
             res.set_content(std::string(blob.bytes.begin(), blob.bytes.end()), blob.media_type);
           }));

  http.Get(R"(/api/v1/help/([^/]+))", guarded([](const Request& req, Response& res) {
             const std::string locale = req.has_param("locale") ? req.get_param_value("locale") : "en";
             const auto h = care::help_text(req.matches[1].str(), locale);
             send(res, 200,
                  {{"screen", h.screen}, {"locale", h.locale}, {"text", h.text}, {"audio_available", h.audio_available}});
           }));

  http.set_error_handler([](const Request&, Response& res) {
    if (!res.body.empty()) return;
    switch (res.status) {
      case 404: send(res, 404, {{"error", "not_found"}, {"message", "no such endpoint"}}); break;
      case 413: send(res, 413, {{"error", "payload_too_large"}, {"message", "request body too large"}}); break;
      default: send(res, res.status, {{"error", "http_" + std::to_string(res.status)}}); break;
    }
  });
}

Server::Server(ServiceConfig config, std::shared_ptr<store::Store> store, std::shared_ptr<const topformer::Model> model)
    : impl_(std::make_unique<Impl>()) {
  config.validate();
  impl_->config = std::move(config);
  impl_->store = std::move(store);
  impl_->model = std::move(model);
  const int workers = impl_->config.worker_threads;
  impl_->http.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };
  // Room for several images plus the manifest; single images are checked against the limit itself.
  impl_->http.set_payload_max_length(impl_->config.upload_limit_bytes * 8 + (1u << 20));
  impl_->routes();
}

Server::~Server() { stop(); }

int Server::bind() {
  const auto& c = impl_->config;
  int port = c.port;
  if (port == 0) {
    port = impl_->http.bind_to_any_port(c.host);
  } else if (!impl_->http.bind_to_port(c.host, port)) {
    port = -1;
  }
  if (port < 0)
    throw Error(ErrorCode::io, "cannot bind " + c.host + ":" + std::to_string(c.port) + " (port busy?)", "port");
  impl_->bound_port = port;
  return port;
}

void Server::listen() { impl_->http.listen_after_bind(); }

int Server::start() {
  const int p = bind();
  impl_->thread = std::thread([this] { listen(); });
  impl_->http.wait_until_ready();
  return p;
}

void Server::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int Server::port() const noexcept { return impl_->bound_port; }

std::unique_ptr<Server> make_server(const ServiceConfig& config) {
  config.validate();
  auto store = std::make_shared<store::Store>(config.data_dir);
  std::shared_ptr<const topformer::Model> model;
  if (!config.model_path.empty())
    model = std::make_shared<const topformer::Model>(topformer::load_model(config.model_path, config.model_config));
  return std::make_unique<Server>(config, std::move(store), std::move(model));
}

}  // namespace woundcare::api

#pragma once

#include <memory>
#include <string>

#include "woundcare/api/config.hpp"
#include "woundcare/error.hpp"
#include "woundcare/store.hpp"
#include "woundcare/topformer/model.hpp"

namespace woundcare::api {

/// HTTP status for a domain error code.
int http_status(ErrorCode code) noexcept;

/// JSON API over the care, scheduling and sizing modules.
///
/// Without a model, submissions are stored unsegmented.
class Server {
 public:
  Server(ServiceConfig config, std::shared_ptr<store::Store> store, std::shared_ptr<const topformer::Model> model);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port. ErrorCode::io if busy.
  int bind();
  /// Serves until stop(); in-flight requests finish first.
  void listen();
  /// bind() + listen() on a background thread.
  int start();
  void stop();
  int port() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Opens the store under config.data_dir and loads the configured model, if any.
std::unique_ptr<Server> make_server(const ServiceConfig& config);

}  // namespace woundcare::api

/* Copyright 2026 The MonoPix Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Eigen must come before httplib: <resolv.h> defines a `_res` macro.
#include "monopix/service.hpp"

#include <httplib.h>

namespace monopix {

struct HttpServer::Impl {
  Impl(const ModelRegistry& r, ServiceOptions o) : registry(r), options(o) {}
  const ModelRegistry& registry;
  ServiceOptions options;
  httplib::Server server;
};

HttpServer::HttpServer(const ModelRegistry& registry, ServiceOptions options)
    : impl_(std::make_unique<Impl>(registry, options)) {
  auto& s = impl_->server;
  // Bodies past the cap are refused by httplib with 413 before routing.
  s.set_payload_max_length(options.max_payload_bytes);
  auto route = [impl = impl_.get()](const httplib::Request& req, httplib::Response& res) {
    const HttpReply reply = handle_request(impl->registry, impl->options, req.method, req.path, req.body);
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
  };
  // Every path goes through handle_request so that unknown routes and
  // wrong methods get the JSON error body.
  s.Get(".*", route);
  s.Post(".*", route);
  s.Put(".*", route);
  s.Delete(".*", route);
  s.Patch(".*", route);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

bool HttpServer::running() const { return impl_->server.is_running(); }

void serve(const ModelRegistry& registry, const std::string& host, int port, const ServiceOptions& options) {
  HttpServer server(registry, options);
  server.bind(host, port);
  server.run();
}

}  // namespace monopix

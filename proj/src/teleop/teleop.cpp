#include "capsim/teleop.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <map>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "capsim/errors.hpp"

namespace capsim::teleop {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using jsonio::Json;

std::string to_string(Status s) {
  switch (s) {
    case Status::Running: return "running";
    case Status::Paused: return "paused";
    case Status::Finished: return "finished";
  }
  return "?";
}

Json state_frame(const sim::Simulation& sim, Status status) {
  const auto& c = sim.capsule();
  const auto& r = sim.last_report();
  const Quat& q = c.pose.rotation();
  Json magnets = Json::array();
  for (std::size_t i = 0; i < sim.magnet_count(); ++i) magnets.push_back(jsonio::to_json(sim.magnet_pose(i)));
  Json arm_q = nullptr;
  if (sim.arm_model()) {
    arm_q = Json::array();
    for (int i = 0; i < 7; ++i) arm_q.push_back(sim.arm_q()[i]);
  }
  return {{"type", "state"},
          {"t", sim.time()},
          {"step", sim.steps()},
          {"status", to_string(status)},
          {"position", jsonio::to_json(c.pose.translation())},
          {"quaternion", Json::array({q.x(), q.y(), q.z(), q.w()})},
          {"velocity", jsonio::to_json(c.velocity)},
          {"angular_velocity", jsonio::to_json(c.angular_velocity)},
          {"coverage", sim.coverage_fraction()},
          {"covered", sim.coverage().covered()},
          {"total", sim.coverage().total()},
          {"contact", r.contact},
          {"breakdown",
           {{"magnetic", jsonio::to_json(r.breakdown.magnetic)},
            {"friction", jsonio::to_json(r.breakdown.friction)},
            {"peristalsis", jsonio::to_json(r.breakdown.peristalsis)},
            {"contact", jsonio::to_json(r.breakdown.contact)},
            {"gravity", jsonio::to_json(r.breakdown.gravity)}}},
          {"magnets", magnets},
          {"arm_q", arm_q},
          {"mmc_phase", tissue::to_string(sim.world().organ->phase(sim.time()).id)}};
}

std::optional<CommandQueue::Entry> CommandQueue::push(Entry e) {
  std::lock_guard lock(mutex_);
  std::optional<Entry> dropped;
  if (items_.size() >= capacity_) {
    dropped = std::move(items_.front());
    items_.pop_front();
  }
  items_.push_back(std::move(e));
  return dropped;
}

std::vector<CommandQueue::Entry> CommandQueue::drain() {
  std::lock_guard lock(mutex_);
  std::vector<Entry> out(std::make_move_iterator(items_.begin()), std::make_move_iterator(items_.end()));
  items_.clear();
  return out;
}

std::size_t CommandQueue::size() const {
  std::lock_guard lock(mutex_);
  return items_.size();
}

// --- Network plumbing ----------------------------------------------------------

class WsSession;

class Server::Impl {
 public:
  Impl(scenario::ScenarioConfig config, ServeOptions options);

  void start();
  void stop();

  // I/O thread only.
  void add_session(std::uint64_t id, std::weak_ptr<WsSession> s);
  void remove_session(std::uint64_t id);
  void on_message(std::uint64_t id, const std::string& text);
  http::response<http::string_body> handle_http(const http::request<http::string_body>& req);
  std::uint64_t next_id() { return ++last_id_; }

  // Any thread.
  void send_to(std::uint64_t id, std::string msg);
  void broadcast(std::string msg);

  unsigned short port = 0;
  std::filesystem::path log_path;
  std::filesystem::path trajectory_path;

 private:
  void do_accept();
  void stepper();
  void publish_coverage();

  scenario::ScenarioConfig config_;
  ServeOptions options_;
  std::string scenario_json_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  std::map<std::uint64_t, std::weak_ptr<WsSession>> sessions_;
  std::uint64_t last_id_ = 0;
  CommandQueue queue_;

  sim::Simulation sim_;
  sim::RunWriter writer_;
  std::ofstream log_;

  std::mutex coverage_mutex_;
  std::string coverage_snapshot_;
  std::size_t coverage_published_ = 0;

  std::atomic<bool> stopping_{false};
  bool started_ = false;
  bool stopped_ = false;
  std::thread io_thread_;
  std::thread step_thread_;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Server::Impl& server, std::uint64_t id)
      : ws_(std::move(socket)), server_(server), id_(id) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

  void send(std::shared_ptr<const std::string> msg) {
    if (pending_.size() >= kMaxPending) return;  // a stalled client loses frames, not the session
    pending_.push_back(std::move(msg));
    if (pending_.size() == 1) do_write();
  }

 private:
  static constexpr std::size_t kMaxPending = 256;

  void on_accept(beast::error_code ec) {
    if (ec) return;
    server_.add_session(id_, weak_from_this());
    do_read();
  }

  void do_read() { ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this())); }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      server_.remove_session(id_);
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    server_.on_message(id_, text);
    do_read();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(*pending_.front()), beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      server_.remove_session(id_);
      return;
    }
    pending_.pop_front();
    if (!pending_.empty()) do_write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> pending_;
  Server::Impl& server_;
  std::uint64_t id_;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Server::Impl& server) : stream_(std::move(socket)), server_(server) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

 private:
  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), server_, server_.next_id())->run(std::move(req_));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>(server_.handle_http(req_));
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  Server::Impl& server_;
};

// --- Server::Impl ----------------------------------------------------------------

namespace {

sim::Command stop_command() {
  sim::Command c;
  c.kind = sim::CommandKind::Stop;
  return c;
}

std::filesystem::path in_dir(const std::filesystem::path& dir, const std::filesystem::path& p) {
  return p.is_absolute() ? p : dir / p;
}

}  // namespace

Server::Impl::Impl(scenario::ScenarioConfig config, ServeOptions options)
    : config_(std::move(config)),
      options_(std::move(options)),
      scenario_json_(scenario::to_json(config_).dump(2)),
      acceptor_(ioc_),
      queue_(options_.queue_capacity),
      sim_(config_),
      writer_(config_, options_.output_dir) {
  try {
    const tcp::endpoint endpoint(net::ip::make_address(options_.bind), options_.port);
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen(net::socket_base::max_listen_connections);
    port = acceptor_.local_endpoint().port();
  } catch (const boost::system::system_error& e) {
    throw BindError(fmt::format("cannot listen on {}:{}: {}", options_.bind, options_.port, e.code().message()));
  }
  log_path = in_dir(options_.output_dir, options_.command_log);
  log_.open(log_path, std::ios::out | std::ios::trunc);
  if (!log_) throw Error("cannot write " + log_path.string());
  trajectory_path = writer_.trajectory_path();
  coverage_snapshot_ = writer_.coverage_csv();
  coverage_published_ = coverage_snapshot_.size();
}

void Server::Impl::start() {
  if (started_) return;
  started_ = true;
  do_accept();
  io_thread_ = std::thread([this] { ioc_.run(); });
  step_thread_ = std::thread([this] { stepper(); });
  spdlog::info("serve: listening on {}:{}", options_.bind, port);
}

void Server::Impl::stop() {
  if (stopped_) return;
  stopped_ = true;
  stopping_ = true;
  if (step_thread_.joinable()) step_thread_.join();
  net::post(ioc_, [this] {
    beast::error_code ignored;
    acceptor_.close(ignored);
  });
  ioc_.stop();
  if (io_thread_.joinable()) io_thread_.join();
  if (!started_) {
    // Never started: still leave a well-formed, replayable log.
    log_ << sim::command_log_line({sim_.steps(), stop_command()}) << '\n';
  }
  log_.flush();
  writer_.flush();
}

void Server::Impl::do_accept() {
  acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<HttpSession>(std::move(socket), *this)->run();
    do_accept();
  });
}

void Server::Impl::add_session(std::uint64_t id, std::weak_ptr<WsSession> s) { sessions_[id] = std::move(s); }

void Server::Impl::remove_session(std::uint64_t id) { sessions_.erase(id); }

void Server::Impl::send_to(std::uint64_t id, std::string msg) {
  net::post(ioc_, [this, id, m = std::make_shared<const std::string>(std::move(msg))] {
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) return;
    if (auto s = it->second.lock()) s->send(m);
  });
}

void Server::Impl::broadcast(std::string msg) {
  net::post(ioc_, [this, m = std::make_shared<const std::string>(std::move(msg))] {
    for (auto& [id, weak] : sessions_) {
      if (auto s = weak.lock()) s->send(m);
    }
  });
}

void Server::Impl::on_message(std::uint64_t id, const std::string& text) {
  const auto error = [&](const std::string& reason) {
    send_to(id, Json{{"type", "error"}, {"reason", reason}}.dump());
  };
  sim::Command cmd;
  try {
    cmd = sim::parse_command(jsonio::parse(text, "message"));
  } catch (const InputError& e) {
    error(e.what());
    return;
  }
  if (cmd.kind == sim::CommandKind::Stop) {
    error("\"stop\" only appears in command logs");
    return;
  }
  if (auto dropped = queue_.push({id, cmd})) {
    send_to(dropped->client,
            Json{{"type", "notice"}, {"reason", "command queue full; dropped the oldest command"},
                 {"cmd", sim::to_string(dropped->cmd.kind)}}
                .dump());
  }
}

http::response<http::string_body> Server::Impl::handle_http(const http::request<http::string_body>& req) {
  http::response<http::string_body> res;
  res.version(req.version());
  res.keep_alive(false);
  res.set(http::field::server, "capsim");
  if (req.method() != http::verb::get) {
    res.result(http::status::method_not_allowed);
    res.set(http::field::content_type, "text/plain");
    res.body() = "only GET is supported\n";
  } else if (req.target() == "/scenario") {
    res.result(http::status::ok);
    res.set(http::field::content_type, "application/json");
    res.body() = scenario_json_;
  } else if (req.target() == "/coverage") {
    res.result(http::status::ok);
    res.set(http::field::content_type, "text/csv");
    std::lock_guard lock(coverage_mutex_);
    res.body() = coverage_snapshot_;
  } else {
    res.result(http::status::not_found);
    res.set(http::field::content_type, "text/plain");
    res.body() = "not found\n";
  }
  res.prepare_payload();
  return res;
}

void Server::Impl::publish_coverage() {
  const std::string& csv = writer_.coverage_csv();
  std::lock_guard lock(coverage_mutex_);
  if (csv.size() < coverage_published_) {  // outputs restarted
    coverage_snapshot_ = csv;
  } else {
    coverage_snapshot_.append(csv, coverage_published_, std::string::npos);
  }
  coverage_published_ = csv.size();
}

void Server::Impl::stepper() {
  using clock = std::chrono::steady_clock;
  bool running = !options_.start_paused;
  double rate = options_.steps_per_second.value_or(1.0 / config_.dt);
  const auto frame_period = std::chrono::duration<double>(1.0 / options_.frame_hz);
  auto last = clock::now();
  auto next_frame = last;
  double budget = 0.0;

  const auto status = [&] {
    if (sim_.finished()) return Status::Finished;
    return running ? Status::Running : Status::Paused;
  };
  const auto publish = [&] {
    publish_coverage();
    broadcast(state_frame(sim_, status()).dump());
  };

  while (!stopping_) {
    for (auto& entry : queue_.drain()) {
      log_ << sim::command_log_line({sim_.steps(), entry.cmd}) << '\n';
      log_.flush();
      switch (entry.cmd.kind) {
        case sim::CommandKind::Pause: running = false; break;
        case sim::CommandKind::Resume: running = true; break;
        case sim::CommandKind::SetRate: rate = entry.cmd.hz; break;
        default: break;
      }
      const auto outcome = sim::apply_command(sim_, writer_, entry.cmd, options_.limits);
      const std::string name = sim::to_string(entry.cmd.kind);
      if (outcome.accepted) {
        send_to(entry.client, Json{{"type", "ack"}, {"cmd", name}, {"step", sim_.steps()}}.dump());
      } else {
        send_to(entry.client, Json{{"type", "error"}, {"cmd", name}, {"reason", outcome.reason}}.dump());
      }
      if (entry.cmd.kind == sim::CommandKind::Reset) budget = 0.0;
      publish();
    }

    const auto now = clock::now();
    if (running && !sim_.finished()) {
      budget += rate * std::chrono::duration<double>(now - last).count();
      int n = static_cast<int>(std::min(budget, 1000.0));
      budget -= n;
      while (n-- > 0 && !sim_.finished()) {
        try {
          writer_.record(sim_, sim_.step());
        } catch (const Error& e) {
          spdlog::error("serve: simulation halted: {}", e.what());
          broadcast(Json{{"type", "error"}, {"reason", e.what()}}.dump());
          running = false;
          break;
        }
      }
    } else {
      budget = 0.0;
    }
    last = now;
    if (now >= next_frame) {
      publish();
      next_frame += std::chrono::duration_cast<clock::duration>(frame_period);
      if (next_frame < now) next_frame = now;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  log_ << sim::command_log_line({sim_.steps(), stop_command()}) << '\n';
  log_.flush();
  writer_.flush();
}

// --- Server ------------------------------------------------------------------------

Server::Server(scenario::ScenarioConfig config, ServeOptions options)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(options))) {}

Server::~Server() { stop(); }

unsigned short Server::port() const { return impl_->port; }
void Server::start() { impl_->start(); }
void Server::stop() {
  if (impl_) impl_->stop();
}
std::filesystem::path Server::command_log_path() const { return impl_->log_path; }
std::filesystem::path Server::trajectory_path() const { return impl_->trajectory_path; }

}  // namespace capsim::teleop

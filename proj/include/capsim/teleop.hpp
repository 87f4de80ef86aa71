#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "capsim/json_io.hpp"
#include "capsim/scenario.hpp"
#include "capsim/simulation.hpp"

namespace capsim::teleop {

enum class Status { Running, Paused, Finished };

std::string to_string(Status s);

/// {"type": "state", t, step, status, position, quaternion, velocity,
///  angular_velocity, coverage, covered, total, breakdown, magnets, arm_q, mmc_phase}
jsonio::Json state_frame(const sim::Simulation& sim, Status status);

/// Bounded FIFO shared by network readers and the stepper. When full, the
/// oldest entry is dropped and returned so its sender can be told.
class CommandQueue {
 public:
  struct Entry {
    std::uint64_t client = 0;
    sim::Command cmd;
  };

  explicit CommandQueue(std::size_t capacity = 256) : capacity_(capacity) {}

  std::optional<Entry> push(Entry e);
  std::vector<Entry> drain();
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::deque<Entry> items_;
  std::size_t capacity_;
};

struct ServeOptions {
  std::string bind = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::optional<double> steps_per_second;  // default: real time (1 / dt)
  double frame_hz = 20.0;
  std::size_t queue_capacity = 256;
  std::filesystem::path output_dir = ".";
  std::filesystem::path command_log = "commands.jsonl";  // relative paths land in output_dir
  sim::CommandLimits limits;
  bool start_paused = false;
};

/// Live teleoperation session: one stepper thread owns the Simulation, one I/O
/// thread serves WebSocket clients and HTTP GET /scenario and /coverage on the
/// same port. Every applied command is appended to the command log, which
/// replays through run_simulation with the teleop controller.
class Server {
 public:
  /// Binds immediately; BindError when the address is unusable.
  Server(scenario::ScenarioConfig config, ServeOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;
  void start();
  /// Idempotent. Writes the closing entry of the command log and joins threads.
  void stop();

  std::filesystem::path command_log_path() const;
  std::filesystem::path trajectory_path() const;

  class Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace capsim::teleop

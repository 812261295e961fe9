#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "orchestra/container.hpp"
#include "orchestra/demos.hpp"
#include "orchestra/errors.hpp"
#include "orchestra/service.hpp"
#include "orchestra/state_json.hpp"

using namespace orchestra;

namespace {

constexpr int kOk = 0, kFailure = 1, kUsage = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const InterfaceClash*>(&e)) return "InterfaceClash";
  if (dynamic_cast<const ValidationError*>(&e)) return "ValidationError";
  if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
  if (dynamic_cast<const StartupError*>(&e)) return "StartupError";
  if (dynamic_cast<const NameClash*>(&e)) return "NameClash";
  if (dynamic_cast<const StorageError*>(&e)) return "StorageError";
  if (dynamic_cast<const DecodeError*>(&e)) return "DecodeError";
  return "Error";
}

void print_error(const std::exception& e) {
  std::cerr << nlohmann::json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << "\n";
}

int cmd_check(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  }
  try {
    for (const auto& w : Container::check(parse_json_strict(text)))
      std::cerr << nlohmann::json{{"warning", w}}.dump() << "\n";
  } catch (const Error& e) {
    print_error(e);
    return kFailure;
  }
  std::cout << "ok\n";
  return kOk;
}

int cmd_run(const std::string& path, std::uint64_t seed, const std::string& log_path) {
  ContainerOptions opts;
  opts.seed = seed;
  nlohmann::json config;
  try {
    config = parse_json_strict(read_file(path));
    if (!log_path.empty()) opts.log = std::make_shared<EventLog>(log_path);
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    print_error(e);
    return kFailure;
  }

  // Worker threads inherit the mask; signals are collected below.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Container container(opts);
  try {
    container.load(config);
  } catch (const Error& e) {
    print_error(e);
    return kFailure;
  }
  for (const auto& w : container.warnings()) std::cerr << "warning: " << w << "\n";

  if (container.has_listeners()) {
    std::cerr << "running; stop with SIGINT or SIGTERM\n";
    int sig = 0;
    sigwait(&signals, &sig);
  } else {
    while (!container.wait_idle(std::chrono::milliseconds(200))) {
      timespec poll{0, 0};
      if (sigtimedwait(&signals, nullptr, &poll) > 0) break;
    }
  }
  container.stop();
  for (const auto& name : container.service_names())
    for (const auto& s : container.engine(name).sessions())
      std::cout << name << "#" << s.id << " "
                << (s.completion ? s.completion->to_string() : std::string("unfinished")) << "\n";
  return kOk;
}

int cmd_call(const std::string& where, const std::string& op, const std::string& payload_text,
             const std::string& resource, bool solicit) {
  Location target;
  State payload;
  try {
    target = Location::parse(where);
    payload = state_from_json(parse_json_strict(payload_text));
  } catch (const Error& e) {
    print_error(e);
    return kUsage;
  }
  try {
    FrameClient client(Network(), target);
    Frame request = Frame::request("", op, std::move(payload), resource);
    if (!solicit) {
      client.send(std::move(request), {});
      return kOk;
    }
    Frame f = client.call(std::move(request));
    if (f.type == Frame::Type::Fault) {
      std::cout << "fault " << f.fault << "\n";
      return kFailure;
    }
    std::cout << state_to_json(f.payload).dump() << "\n";
    return kOk;
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  }
}

int cmd_demo(const std::string& name, std::uint64_t seed, const std::string& log_path) {
  demos::Options opts;
  opts.seed = seed;
  try {
    if (!log_path.empty()) opts.log = std::make_shared<EventLog>(log_path);
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  }
  demos::Result r = demos::run(name, opts);
  for (const auto& line : r.transcript) std::cout << line << "\n";
  if (r.ok()) return kOk;
  std::cerr << "transcript mismatch:\n" << r.diff();
  return kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"orchestra: run and compose services"};
  app.require_subcommand(1);

  std::string path, log_path, location, op, payload = "{}", resource, demo;
  std::uint64_t seed = 0;
  bool solicit = false;

  auto* check = app.add_subcommand("check", "validate a container configuration");
  check->add_option("config", path)->required();

  auto* run = app.add_subcommand("run", "load a container and run it");
  run->add_option("config", path)->required();
  run->add_option("--seed", seed);
  run->add_option("--log", log_path, "append the event log to this file");

  auto* call = app.add_subcommand("call", "send one frame");
  call->add_option("location", location)->required();
  call->add_option("operation", op)->required();
  call->add_option("payload", payload, "JSON object");
  call->add_option("--resource", resource);
  call->add_flag("--solicit", solicit, "wait for the response and print it");

  auto* demo_cmd = app.add_subcommand("demo", "run a bundled scenario");
  demo_cmd->add_option("name", demo)->required()->check(CLI::IsMember(demos::names()));
  demo_cmd->add_option("--seed", seed);
  demo_cmd->add_option("--log", log_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kOk : kUsage;
  }

  try {
    if (*check) return cmd_check(path);
    if (*run) return cmd_run(path, seed, log_path);
    if (*call) return cmd_call(location, op, payload, resource, solicit);
    return cmd_demo(demo, seed == 0 ? 1 : seed, log_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

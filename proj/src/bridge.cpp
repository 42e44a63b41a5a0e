#include "ots/bridge.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

extern char** environ;

namespace ots {

namespace {

// Single-precision numbers so that dump() emits shortest f32 decimals and
// parsing goes through strtof.
using wire_json = nlohmann::basic_json<std::map, std::vector, std::string, bool,
                                       std::int64_t, std::uint64_t, float>;

using Clock = std::chrono::steady_clock;

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  if (flags < 0 || ::fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0) {
    throw BridgeError(BridgeError::Kind::kTransport,
                      std::string("fcntl: ") + std::strerror(errno), 0);
  }
}

int remaining_ms(Clock::time_point deadline) {
  const auto left =
      std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(left);
}

BridgeError protocol_error(const std::string& what) {
  return BridgeError(BridgeError::Kind::kProtocol, "bridge protocol error: " + what, 0);
}

}  // namespace

std::string to_string(ScoreKind kind) {
  return kind == ScoreKind::kLogits ? "logits" : "probs";
}

ScoreKind parse_score_kind(const std::string& text) {
  if (text == "logits") return ScoreKind::kLogits;
  if (text == "probs") return ScoreKind::kProbs;
  throw ConfigError("unknown score kind '" + text + "' (expected logits|probs)");
}

void BridgeConfig::validate() const {
  if (timeout_ms <= 0) throw ConfigError("bridge timeout must be positive");
  if (num_classes < 2) throw ConfigError("bridge K must be at least 2");
  if (transport == Transport::kStdioSubprocess && command.empty()) {
    throw ConfigError("stdio bridge needs a command");
  }
  if (transport == Transport::kTcp && (host.empty() || port <= 0 || port > 65535)) {
    throw ConfigError("tcp bridge needs host and port in 1..65535");
  }
}

void parse_endpoint(const std::string& endpoint, BridgeConfig& config) {
  if (endpoint.rfind("stdio:", 0) == 0) {
    std::istringstream words(endpoint.substr(6));
    config.command.clear();
    for (std::string w; words >> w;) config.command.push_back(w);
    config.transport = Transport::kStdioSubprocess;
    if (config.command.empty()) throw ConfigError("empty stdio command in '" + endpoint + "'");
    return;
  }
  if (endpoint.rfind("tcp:", 0) == 0) {
    const std::string rest = endpoint.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0) {
      throw ConfigError("tcp endpoint must be tcp:<host>:<port>");
    }
    config.host = rest.substr(0, colon);
    try {
      std::size_t used = 0;
      config.port = std::stoi(rest.substr(colon + 1), &used);
      if (used != rest.size() - colon - 1) throw std::invalid_argument("port");
    } catch (const std::exception&) {
      throw ConfigError("bad tcp port in '" + endpoint + "'");
    }
    config.transport = Transport::kTcp;
    return;
  }
  throw ConfigError("endpoint must start with stdio: or tcp:");
}

std::string encode_request(std::int64_t id, const Image& x) {
  wire_json j;
  j["id"] = id;
  j["shape"] = {x.shape().height, x.shape().width, x.shape().channels};
  auto& pixels = j["pixels"] = wire_json::array();
  pixels.get_ref<wire_json::array_t&>().reserve(x.size());
  for (const double v : x.pixels()) pixels.push_back(static_cast<float>(v));
  return j.dump();
}

LogitVector decode_response(const std::string& line, std::int64_t expected_id,
                            const BridgeSession& session) {
  wire_json j;
  try {
    j = wire_json::parse(line);
  } catch (const wire_json::parse_error& e) {
    throw protocol_error(std::string("malformed response: ") + e.what());
  }
  if (!j.is_object()) throw protocol_error("response is not an object");
  const auto id = j.find("id");
  if (id == j.end() || !id->is_number_integer() || id->get<std::int64_t>() != expected_id) {
    throw protocol_error("response id does not match request " + std::to_string(expected_id));
  }
  if (const auto err = j.find("error"); err != j.end()) {
    throw protocol_error("sidecar reported: " + err->dump());
  }
  const auto kind = j.find("kind");
  if (kind == j.end() || !kind->is_string() || kind->get<std::string>() != to_string(session.kind)) {
    throw protocol_error("response kind differs from the negotiated '" +
                         to_string(session.kind) + "'");
  }
  const auto values = j.find("values");
  if (values == j.end() || !values->is_array() ||
      values->size() != static_cast<std::size_t>(session.num_classes)) {
    throw protocol_error("response must carry " + std::to_string(session.num_classes) +
                         " values");
  }
  LogitVector out;
  out.values.reserve(values->size());
  for (const auto& v : *values) {
    if (!v.is_number()) throw protocol_error("non-numeric score");
    const double value = v.get<float>();
    if (!std::isfinite(value)) throw protocol_error("non-finite score");
    if (session.kind == ScoreKind::kLogits) {
      out.values.push_back(value);
    } else {
      if (value < 0.0 || value > 1.0) throw protocol_error("probability outside [0, 1]");
      // Zero probabilities are floored at the smallest positive f32.
      out.values.push_back(
          std::log(std::max(value, double{std::numeric_limits<float>::denorm_min()})));
    }
  }
  return out;
}

BridgeOracle::BridgeOracle(const BridgeConfig& config) : config_(config) {
  config_.validate();
  ignore_sigpipe();
  try {
    connect();
    handshake();
  } catch (...) {
    close_all();
    throw;
  }
}

BridgeOracle::~BridgeOracle() { close_all(); }

void BridgeOracle::fail(BridgeError::Kind kind, const std::string& what) const {
  throw BridgeError(kind, what, queries());
}

void BridgeOracle::connect() {
  if (config_.transport == Transport::kStdioSubprocess) {
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) fail(BridgeError::Kind::kTransport, "pipe failed");
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      fail(BridgeError::Kind::kTransport, "pipe failed");
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    std::vector<char*> argv;
    for (auto& arg : config_.command) argv.push_back(arg.data());
    argv.push_back(nullptr);
    pid_t pid = -1;
    const int rc = ::posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    if (rc != 0) {
      fail(BridgeError::Kind::kTransport,
           "cannot start '" + config_.command[0] + "': " + std::strerror(rc));
    }
    child_pid_ = pid;
    set_nonblocking(read_fd_);
    set_nonblocking(write_fd_);
    return;
  }

  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  const std::string port = std::to_string(config_.port);
  if (const int rc = ::getaddrinfo(config_.host.c_str(), port.c_str(), &hints, &found); rc != 0) {
    fail(BridgeError::Kind::kTransport,
         "cannot resolve " + config_.host + ": " + ::gai_strerror(rc));
  }
  const auto deadline = Clock::now() + std::chrono::milliseconds(config_.timeout_ms);
  std::string last_error = "no address";
  for (addrinfo* a = found; a != nullptr; a = a->ai_next) {
    const int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC | SOCK_NONBLOCK,
                            a->ai_protocol);
    if (fd < 0) continue;
    int rc = ::connect(fd, a->ai_addr, a->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd p{fd, POLLOUT, 0};
      if (::poll(&p, 1, remaining_ms(deadline)) == 1) {
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
      } else {
        errno = ETIMEDOUT;
      }
    }
    if (rc == 0) {
      read_fd_ = write_fd_ = fd;
      ::freeaddrinfo(found);
      return;
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(found);
  fail(errno == ETIMEDOUT ? BridgeError::Kind::kTimeout : BridgeError::Kind::kTransport,
       "cannot connect to " + config_.host + ":" + port + ": " + last_error);
}

void BridgeOracle::handshake() {
  const std::string line = read_line();
  wire_json j;
  try {
    j = wire_json::parse(line);
  } catch (const wire_json::parse_error&) {
    fail(BridgeError::Kind::kProtocol, "bridge protocol error: malformed greeting: " + line);
  }
  const auto hello = j.is_object() ? j.find("hello") : j.end();
  const auto k = j.is_object() ? j.find("k") : j.end();
  const auto kind = j.is_object() ? j.find("kind") : j.end();
  if (!j.is_object() || hello == j.end() || !hello->is_number_integer() || k == j.end() ||
      !k->is_number_integer() || kind == j.end() || !kind->is_string()) {
    fail(BridgeError::Kind::kProtocol, "bridge protocol error: malformed greeting: " + line);
  }
  session_.version = hello->get<int>();
  session_.num_classes = k->get<int>();
  if (session_.version != kBridgeProtocolVersion) {
    fail(BridgeError::Kind::kVersionMismatch,
         "sidecar speaks protocol " + std::to_string(session_.version) + ", client speaks " +
             std::to_string(kBridgeProtocolVersion));
  }
  if (session_.num_classes != config_.num_classes) {
    fail(BridgeError::Kind::kClassMismatch,
         "sidecar advertises K=" + std::to_string(session_.num_classes) + ", config expects K=" +
             std::to_string(config_.num_classes));
  }
  const std::string advertised = kind->get<std::string>();
  if (advertised != to_string(config_.returns)) {
    fail(BridgeError::Kind::kKindMismatch, "sidecar returns '" + advertised +
                                               "', config expects '" +
                                               to_string(config_.returns) + "'");
  }
  session_.kind = config_.returns;
}

void BridgeOracle::send_line(const std::string& line) {
  const auto deadline = Clock::now() + std::chrono::milliseconds(config_.timeout_ms);
  const std::string payload = line + "\n";
  std::size_t sent = 0;
  while (sent < payload.size()) {
    const ssize_t n = config_.transport == Transport::kTcp
                          ? ::send(write_fd_, payload.data() + sent, payload.size() - sent,
                                   MSG_NOSIGNAL)
                          : ::write(write_fd_, payload.data() + sent, payload.size() - sent);
    if (n > 0) {
      sent += static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      pollfd p{write_fd_, POLLOUT, 0};
      const int ready = ::poll(&p, 1, remaining_ms(deadline));
      if (ready == 0) fail(BridgeError::Kind::kTimeout, "bridge request timed out");
      if (ready < 0 && errno != EINTR) fail(BridgeError::Kind::kTransport, "poll failed");
      continue;
    }
    fail(BridgeError::Kind::kDisconnected, "sidecar connection dropped");
  }
}

std::string BridgeOracle::read_line() {
  const auto deadline = Clock::now() + std::chrono::milliseconds(config_.timeout_ms);
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    pollfd p{read_fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, remaining_ms(deadline));
    if (ready == 0) fail(BridgeError::Kind::kTimeout, "bridge response timed out");
    if (ready < 0) {
      if (errno == EINTR) continue;
      fail(BridgeError::Kind::kTransport, "poll failed");
    }
    char chunk[65536];
    const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
    if (n > 0) {
      buffer_.append(chunk, static_cast<std::size_t>(n));
    } else if (n == 0) {
      fail(BridgeError::Kind::kDisconnected, "sidecar connection dropped");
    } else if (errno != EINTR && errno != EAGAIN && errno != EWOULDBLOCK) {
      fail(BridgeError::Kind::kDisconnected,
           std::string("sidecar read failed: ") + std::strerror(errno));
    }
  }
}

LogitVector BridgeOracle::evaluate(const Image& x) {
  const std::int64_t id = next_id_++;
  send_line(encode_request(id, x));
  const std::string line = read_line();
  try {
    return decode_response(line, id, session_);
  } catch (const BridgeError& e) {
    fail(e.kind(), e.what());
  }
}

void BridgeOracle::close_all() {
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  if (read_fd_ >= 0) ::close(read_fd_);
  read_fd_ = write_fd_ = -1;
  if (child_pid_ > 0) {
    // Closing stdin asks the sidecar to exit; give it a moment, then kill.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(child_pid_, nullptr, WNOHANG) == child_pid_) {
        child_pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(child_pid_, SIGKILL);
    ::waitpid(child_pid_, nullptr, 0);
    child_pid_ = -1;
  }
}

}  // namespace ots

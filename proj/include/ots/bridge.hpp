#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ots/oracle.hpp"

namespace ots {

// Client for external scorer sidecars.
//
// Wire format: newline-delimited JSON, one object per line.
//   greeting (sidecar -> client, once): {"hello": 1, "k": K, "kind": "logits"|"probs"}
//   request  (client -> sidecar):       {"id": n, "shape": [h, w, c], "pixels": [...]}
//   response (sidecar -> client):       {"id": n, "values": [...], "kind": ...}
// A response may instead carry {"id": n, "error": "..."}.
// Numbers are f32 written as the shortest decimal string that parses back to
// the same f32, so both directions round-trip bit-exactly.

inline constexpr int kBridgeProtocolVersion = 1;

enum class Transport { kStdioSubprocess, kTcp };
enum class ScoreKind { kLogits, kProbs };

std::string to_string(ScoreKind kind);
ScoreKind parse_score_kind(const std::string& text);

struct BridgeConfig {
  Transport transport = Transport::kStdioSubprocess;
  std::vector<std::string> command;  // argv for kStdioSubprocess
  std::string host = "127.0.0.1";    // kTcp
  int port = 0;                      // kTcp
  int timeout_ms = 10000;
  int num_classes = 0;
  ScoreKind returns = ScoreKind::kLogits;

  void validate() const;
};

/// Parses "stdio:<command line>" or "tcp:<host>:<port>" into the transport
/// fields of a config. The command line is split on whitespace.
void parse_endpoint(const std::string& endpoint, BridgeConfig& config);

class BridgeError : public std::runtime_error {
 public:
  enum class Kind {
    kTimeout,
    kDisconnected,
    kVersionMismatch,
    kClassMismatch,
    kKindMismatch,
    kProtocol,
    kTransport,
  };

  BridgeError(Kind kind, const std::string& what, std::int64_t queries_used)
      : std::runtime_error(what), kind_(kind), queries_used_(queries_used) {}

  Kind kind() const { return kind_; }
  /// Completed queries on the session when the error surfaced.
  std::int64_t queries_used() const { return queries_used_; }
  /// Timeouts and dropped connections abort the run but leave the experiment
  /// resumable; protocol violations do not.
  bool resumable() const { return kind_ == Kind::kTimeout || kind_ == Kind::kDisconnected; }

 private:
  Kind kind_;
  std::int64_t queries_used_;
};

struct BridgeSession {
  int version = 0;
  int num_classes = 0;
  ScoreKind kind = ScoreKind::kLogits;
};

/// Oracle backed by a sidecar. The constructor connects and performs the
/// handshake; a refused session throws BridgeError. One request is in flight
/// at a time and a failed request is never retried, so queries() counts
/// completed round-trips exactly.
class BridgeOracle : public ClassifierOracle {
 public:
  explicit BridgeOracle(const BridgeConfig& config);
  ~BridgeOracle() override;

  BridgeOracle(const BridgeOracle&) = delete;
  BridgeOracle& operator=(const BridgeOracle&) = delete;

  const BridgeSession& session() const { return session_; }
  int num_classes() const override { return session_.num_classes; }

 protected:
  LogitVector evaluate(const Image& x) override;

 private:
  void connect();
  void handshake();
  void send_line(const std::string& line);
  std::string read_line();
  [[noreturn]] void fail(BridgeError::Kind kind, const std::string& what) const;
  void close_all();

  BridgeConfig config_;
  BridgeSession session_;
  int read_fd_ = -1;
  int write_fd_ = -1;
  int child_pid_ = -1;
  std::string buffer_;
  std::int64_t next_id_ = 0;
};

/// Encodes a request line (without the trailing newline).
std::string encode_request(std::int64_t id, const Image& x);

/// Decodes a response line into logit-equivalents. Probabilities are mapped
/// through log, which preserves differences of logits.
LogitVector decode_response(const std::string& line, std::int64_t expected_id,
                            const BridgeSession& session);

}  // namespace ots

#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "lsplit/ingestion.hpp"
#include "lsplit/scoring.hpp"

namespace lsplit {

// Scoring protocol messages. The server returns log P(continuation | context)
// split over its own tokenization; the context and continuation are joined by
// a single space on the server side.
struct ScoreRequest {
  std::string request_id;
  std::string context;
  std::string continuation;
};

struct ScoreResponse {
  std::string request_id;
  std::vector<double> token_logprobs;
  std::vector<std::string> tokenization;
};

std::string encode_request(const ScoreRequest& req);
ScoreRequest decode_request(std::string_view line);
std::string encode_response(const ScoreResponse& resp);
// Throws ProtocolViolation on any schema problem.
ScoreResponse decode_response(std::string_view line);

// Moves one encoded request to the scorer and returns the raw reply.
// Implementations throw ScorerUnreachable on transport failure.
class ScorerTransport {
 public:
  virtual ~ScorerTransport() = default;
  virtual std::string exchange(const std::string& request) = 0;
};

// HTTP POST of one request per call to `<base>/score`. `endpoint` is
// "http://host:port" (an optional path prefix is allowed).
std::unique_ptr<ScorerTransport> make_http_transport(const std::string& endpoint, double timeout_seconds = 30.0);

// Line-delimited messages over a pair of streams.
std::unique_ptr<ScorerTransport> make_stream_transport(std::istream& in, std::ostream& out);

// Line-delimited messages over the stdin/stdout of a spawned shell command.
std::unique_ptr<ScorerTransport> make_process_transport(const std::string& command);

struct RemoteOptions {
  std::size_t max_retries = 2;  // extra attempts per example before failing
};

// Renders each example's prompt, requests its continuation log-probability
// and sums the token log-probabilities. Results are keyed by id; the first
// example that still fails after retries aborts the run.
std::vector<ScoreRecord> score_prompted_remote(const Dataset& ds, ScorerTransport& transport,
                                               const RemoteOptions& opts = {});

}  // namespace lsplit

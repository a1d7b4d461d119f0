#include "lsplit/remote.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include <httplib.h>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <sys/wait.h>
#include <unistd.h>

#include "lsplit/error.hpp"

namespace lsplit {

using nlohmann::json;

std::string encode_request(const ScoreRequest& req) {
  json j;
  j["request_id"] = req.request_id;
  j["context"] = req.context;
  j["continuation"] = req.continuation;
  return j.dump();
}

ScoreRequest decode_request(std::string_view line) {
  try {
    const json j = json::parse(line);
    ScoreRequest req{j.at("request_id").get<std::string>(), j.at("context").get<std::string>(),
                     j.at("continuation").get<std::string>()};
    if (req.continuation.empty()) throw Error(ErrorCode::ProtocolViolation, "empty continuation");
    return req;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProtocolViolation, std::string("bad request: ") + e.what());
  }
}

std::string encode_response(const ScoreResponse& resp) {
  json j;
  j["request_id"] = resp.request_id;
  j["token_logprobs"] = resp.token_logprobs;
  j["tokenization"] = resp.tokenization;
  return j.dump();
}

ScoreResponse decode_response(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProtocolViolation, std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ProtocolViolation, "response must be an object");
  ScoreResponse resp;
  try {
    resp.request_id = j.at("request_id").get<std::string>();
    const json& lps = j.at("token_logprobs");
    const json& toks = j.at("tokenization");
    if (!lps.is_array() || !toks.is_array()) throw Error(ErrorCode::ProtocolViolation, "arrays expected");
    for (const auto& v : lps) {
      if (!v.is_number()) throw Error(ErrorCode::ProtocolViolation, "token_logprobs must be numbers");
      resp.token_logprobs.push_back(v.get<double>());
    }
    for (const auto& v : toks) resp.tokenization.push_back(v.get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProtocolViolation, e.what());
  }
  if (resp.token_logprobs.empty()) throw Error(ErrorCode::ProtocolViolation, "no token log-probabilities");
  if (resp.token_logprobs.size() != resp.tokenization.size()) {
    throw Error(ErrorCode::ProtocolViolation, "token_logprobs and tokenization differ in length");
  }
  for (double lp : resp.token_logprobs) {
    if (!std::isfinite(lp) || lp > 0.0) {
      throw Error(ErrorCode::ProtocolViolation, "token log-probability must be finite and <= 0");
    }
  }
  return resp;
}

namespace {

class HttpTransport final : public ScorerTransport {
 public:
  HttpTransport(const std::string& endpoint, double timeout_seconds) {
    std::string rest = endpoint;
    constexpr std::string_view kScheme = "http://";
    if (rest.rfind(kScheme, 0) == 0) rest = rest.substr(kScheme.size());
    const std::size_t slash = rest.find('/');
    std::string authority = rest.substr(0, slash);
    if (slash != std::string::npos) path_ = rest.substr(slash);
    while (!path_.empty() && path_.back() == '/') path_.pop_back();
    path_ += "/score";
    int port = 80;
    const std::size_t colon = authority.rfind(':');
    if (colon != std::string::npos) {
      try {
        port = std::stoi(authority.substr(colon + 1));
      } catch (const std::exception&) {
        throw Error(ErrorCode::BadArguments, "bad scorer endpoint `" + endpoint + "`");
      }
      authority = authority.substr(0, colon);
    }
    if (authority.empty()) throw Error(ErrorCode::BadArguments, "bad scorer endpoint `" + endpoint + "`");
    client_ = std::make_unique<httplib::Client>(authority, port);
    const auto secs = static_cast<time_t>(timeout_seconds);
    const auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
    client_->set_connection_timeout(secs, usecs);
    client_->set_read_timeout(secs, usecs);
    client_->set_write_timeout(secs, usecs);
  }

  std::string exchange(const std::string& request) override {
    auto res = client_->Post(path_, request, "application/json");
    if (!res) throw Error(ErrorCode::ScorerUnreachable, httplib::to_string(res.error()));
    if (res->status != 200) {
      throw Error(ErrorCode::ProtocolViolation, "HTTP status " + std::to_string(res->status) + ": " + res->body);
    }
    return res->body;
  }

 private:
  std::unique_ptr<httplib::Client> client_;
  std::string path_;
};

class StreamTransport final : public ScorerTransport {
 public:
  StreamTransport(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

  std::string exchange(const std::string& request) override {
    out_ << request << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorCode::ScorerUnreachable, "stream closed for writing");
    std::string line;
    if (!std::getline(in_, line)) throw Error(ErrorCode::ScorerUnreachable, "stream closed before a reply");
    return line;
  }

 private:
  std::istream& in_;
  std::ostream& out_;
};

class ProcessTransport final : public ScorerTransport {
 public:
  explicit ProcessTransport(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) throw Error(ErrorCode::ScorerUnreachable, "pipe() failed");
    pid_ = fork();
    if (pid_ < 0) throw Error(ErrorCode::ScorerUnreachable, "fork() failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    write_ = fdopen(to_child[1], "w");
    read_ = fdopen(from_child[0], "r");
    std::signal(SIGPIPE, SIG_IGN);
  }

  ~ProcessTransport() override {
    if (write_) std::fclose(write_);
    if (read_) std::fclose(read_);
    if (pid_ > 0) {
      int status = 0;
      waitpid(pid_, &status, 0);
    }
  }

  std::string exchange(const std::string& request) override {
    if (std::fputs(request.c_str(), write_) < 0 || std::fputc('\n', write_) == EOF || std::fflush(write_) != 0) {
      throw Error(ErrorCode::ScorerUnreachable, "scorer process closed its input");
    }
    std::string line;
    int c;
    while ((c = std::fgetc(read_)) != EOF && c != '\n') line.push_back(static_cast<char>(c));
    if (c == EOF && line.empty()) throw Error(ErrorCode::ScorerUnreachable, "scorer process exited");
    return line;
  }

 private:
  pid_t pid_ = -1;
  FILE* write_ = nullptr;
  FILE* read_ = nullptr;
};

}  // namespace

std::unique_ptr<ScorerTransport> make_http_transport(const std::string& endpoint, double timeout_seconds) {
  return std::make_unique<HttpTransport>(endpoint, timeout_seconds);
}

std::unique_ptr<ScorerTransport> make_stream_transport(std::istream& in, std::ostream& out) {
  return std::make_unique<StreamTransport>(in, out);
}

std::unique_ptr<ScorerTransport> make_process_transport(const std::string& command) {
  return std::make_unique<ProcessTransport>(command);
}

std::vector<ScoreRecord> score_prompted_remote(const Dataset& ds, ScorerTransport& transport,
                                               const RemoteOptions& opts) {
  std::vector<ScoreRecord> records;
  records.reserve(ds.size());
  for (const auto& ex : ds.examples) {
    const Prompt prompt = render_prompt(ex, ds.task);
    if (prompt.continuation.empty()) throw Error(ErrorCode::EmptyScoreTarget, ex.id);
    const ScoreRequest req{ex.id, prompt.context, prompt.continuation};
    const std::string wire = encode_request(req);
    for (std::size_t attempt = 0;; ++attempt) {
      try {
        const ScoreResponse resp = decode_response(transport.exchange(wire));
        if (resp.request_id != req.request_id) {
          throw Error(ErrorCode::ProtocolViolation,
                      "reply for `" + resp.request_id + "` while waiting for `" + req.request_id + "`");
        }
        ScoreRecord rec;
        rec.id = ex.id;
        for (double lp : resp.token_logprobs) rec.logprob += lp;
        rec.token_count = resp.token_logprobs.size();
        rec.scorer = kScorerRemote;
        records.push_back(std::move(rec));
        break;
      } catch (const Error& e) {
        if (attempt >= opts.max_retries) {
          throw Error(e.code(), "id " + ex.id + " after " + std::to_string(attempt + 1) + " attempts: " + e.detail());
        }
      }
    }
  }
  return records;
}

}  // namespace lsplit

#pragma once
/**
 * @file  serve.hpp
 * @brief Online teaching: cue policy, per-driver sessions over a live state
 *        stream, the JSON message protocol and the websocket/HTTP server.
 *
 * Sessions use the timestamps in the stream as their clock, so replaying a
 * stream always yields the same cues.
 */

#include "coach/geom.hpp"
#include "coach/metrics.hpp"
#include "coach/train.hpp"

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace coach {

inline constexpr int kProtocolVersion = 1;

struct CuePolicy {
    double tau = 0.5;
    double cooldown = 4.0;   ///< s
    double eval_rate = 2.0;  ///< Hz
    void validate() const;
};

struct CueDecision {
    std::size_t index = 0;
    std::string action;
    double prob = 0.0;
    double t_emit = 0.0;
    std::uint64_t window_id = 0;
};

/// Categories with p >= tau compete; the most probable wins (lowest index on
/// ties). Nothing is emitted within `cooldown` of the previous cue.
std::optional<CueDecision> decide_cue(std::span<const double> probs, const CuePolicy& policy,
                                      std::optional<double> last_cue_time, double now);

/// Immutable model + track shared by every session.
struct ServeModel {
    Checkpoint checkpoint;
    TrackModel track;
    std::string hash;  ///< model_hash(checkpoint)
    double map_radius = 50.0;

    /// Throws ConfigError unless the checkpoint is a track model.
    static std::shared_ptr<const ServeModel> make(Checkpoint ck, TrackModel track);
    [[nodiscard]] nlohmann::json identity() const;  ///< {model_hash, action_set, n_params}
};

struct StepResult {
    bool accepted = true;  ///< false: out of order, dropped
    bool evaluated = false;
    std::optional<CueDecision> cue;
    std::optional<double> lap_time;
    std::vector<double> probs;  ///< of this step's evaluation, when any
};

class Session {
  public:
    Session(std::shared_ptr<const ServeModel> model, CuePolicy policy);

    StepResult step(const State& s);

    [[nodiscard]] std::size_t dropped() const { return dropped_; }
    [[nodiscard]] std::size_t accepted() const { return accepted_; }
    [[nodiscard]] std::size_t buffered() const { return buffer_.size(); }
    [[nodiscard]] const std::vector<CueDecision>& cues() const { return cues_; }
    [[nodiscard]] const LapTracker& laps() const { return laps_; }
    [[nodiscard]] nlohmann::json summary() const;

  private:
    std::shared_ptr<const ServeModel> model_;
    CuePolicy policy_;
    std::deque<State> buffer_;
    LapTracker laps_;
    std::optional<double> last_t_;
    std::optional<double> last_eval_;
    std::optional<double> last_cue_;
    std::uint64_t windows_ = 0;
    std::size_t dropped_ = 0;
    std::size_t accepted_ = 0;
    std::vector<CueDecision> cues_;
};

nlohmann::json cue_to_json(const CueDecision& c);

/// One client connection's protocol state: JSON text in, JSON texts out.
/// Malformed messages get an error reply and leave the session usable; a
/// wrong protocol version or track refuses the session (closed() turns true).
class ProtocolSession {
  public:
    ProtocolSession(std::shared_ptr<const ServeModel> model, CuePolicy policy);

    std::vector<std::string> on_message(const std::string& text);
    [[nodiscard]] bool closed() const { return closed_; }
    [[nodiscard]] const Session* session() const { return session_ ? &*session_ : nullptr; }

  private:
    std::shared_ptr<const ServeModel> model_;
    CuePolicy policy_;
    std::optional<Session> session_;
    bool closed_ = false;
};

/// Replays world-frame states through a fresh protocol session and returns
/// every server reply, one JSON text per line.
std::string replay_transcript(std::shared_ptr<const ServeModel> model, const CuePolicy& policy,
                              std::span<const State> states);

/// State stream as the client sends it: hello, one state per line, end.
std::vector<std::string> client_messages(const std::string& track_name, std::span<const State> states);

/// Websocket + HTTP server; one thread per connection.
class Server {
  public:
    Server(std::shared_ptr<const ServeModel> model, CuePolicy policy);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds 127.0.0.1:`port` (0 picks a free port) and starts accepting.
    /// Returns the bound port.
    unsigned short start(unsigned short port, const std::string& address = "127.0.0.1");
    void stop();
    /// Blocks until stop() is called from another thread or a signal handler.
    void wait();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Minimal blocking websocket client used by tests and the acceptance run:
/// sends each message in order and collects replies until the server closes
/// the stream or `end` has been answered.
std::vector<std::string> ws_exchange(const std::string& host, unsigned short port,
                                     const std::vector<std::string>& messages);
/// GET `target`; returns {status, body}.
std::pair<int, std::string> http_get(const std::string& host, unsigned short port, const std::string& target);

}  // namespace coach

#pragma once

// Streaming service that emulates the edge deployment: sensor-node simulators
// stream buffered 2.56 s windows over TCP, the gateway pairs the two
// modalities by window start time, runs the shared per-window scoring path
// and appends one detection per window to a JSON-lines log.
//
// Concurrency: one reader thread per connection feeds a single-consumer
// inference queue, so windows are scored strictly in completion order and the
// model is only ever touched from one thread. The log is append-only with
// serialized writes. stop() drains the queue and flushes still-unpaired
// windows in single-modality fallback mode.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "falldet/dataset.hpp"
#include "falldet/nn.hpp"
#include "falldet/wire.hpp"

namespace falldet::gw {

struct GatewayConfig {
    std::string listen_host = "127.0.0.1";
    uint16_t port = 0;                // 0 binds an ephemeral port
    double pair_tolerance_s = 0.2;    // max |t0| gap between paired frames
    double fallback_timeout_s = 5.0;  // unpaired beyond this -> single-modality
    double read_deadline_s = 10.0;    // per-connection receive deadline
    std::string log_path;             // JSONL detection log; empty -> memory only
    ds::PipelineConfig pipeline;
};

struct DetectionLogEntry {
    uint64_t t0_us = 0;
    double p_fall = 0.0;
    bool decision = false;
    double latency_ms = 0.0;  // last contributing frame arrival -> scored
    int expert_id = -1;       // fusion router choice
    double gamma_mean = 0.0;
    bool fallback = false;   // one modality timed out and was zero-filled
    uint8_t modalities = 3;  // bit 0 = vibration present, bit 1 = radar present
};

struct GatewayCounters {
    uint64_t frames_ok = 0;
    uint64_t frames_dropped = 0;  // malformed or CRC-rejected
    uint64_t windows_paired = 0;
    uint64_t windows_fallback = 0;
    uint64_t connections = 0;
};

std::string entry_to_json(const DetectionLogEntry& e);
std::vector<DetectionLogEntry> read_log(const std::string& path);  // IoError

class Gateway {
  public:
    // The model is shared, not copied; the caller keeps the checkpoint alive.
    Gateway(nn::FallModel model, ds::NormStats stats, GatewayConfig cfg);
    ~Gateway();

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    void start();  // binds and spawns threads; IoError when the bind fails
    void stop();   // idempotent; drains and joins

    uint16_t port() const { return port_; }
    GatewayCounters counters() const;
    std::vector<DetectionLogEntry> log() const;
    // True once the log holds at least n entries, polling up to timeout_s.
    bool wait_for_log(std::size_t n, double timeout_s) const;

  private:
    struct Pending;
    struct Work;

    void accept_loop();
    void connection_loop(int fd);
    void inference_loop();
    void pair_frame(wire::Frame f);
    void flush_expired(bool all);
    void score(const Work& w);

    nn::FallModel model_;
    ds::NormStats stats_;
    GatewayConfig cfg_;
    uint16_t port_ = 0;
    int listen_fd_ = -1;

    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::thread infer_thread_;
    std::mutex conn_mu_;
    std::vector<std::thread> conn_threads_;
    std::vector<int> conn_fds_;

    std::atomic<bool> draining_{false};
    std::mutex work_mu_;
    std::condition_variable work_cv_;
    std::deque<std::unique_ptr<Pending>> pending_[2];  // [0] vibration, [1] radar
    std::deque<std::unique_ptr<Work>> queue_;

    mutable std::mutex log_mu_;
    std::vector<DetectionLogEntry> log_;
    FILE* log_file_ = nullptr;

    mutable std::mutex counter_mu_;
    GatewayCounters counters_;
};

struct ReplayOptions {
    bool realtime = false;  // pace transmissions at the 1.28 s window stride
    uint16_t node_id = 0;
    int max_retries = 5;  // connection attempts before giving up
};

// Slices a recording into windows (vibration: conditioned 100 Hz triaxial
// samples; radar: kinematic features interpolated onto the same grid),
// encodes the requested modality and streams it to the gateway. Returns the
// number of frames sent. IoError on a bad recording or when the connection
// cannot be (re)established within the retry budget.
std::size_t node_replay(const std::string& recording_dir, const std::string& host,
                        uint16_t port, wire::NodeType type, const ReplayOptions& opt = {});

}  // namespace falldet::gw

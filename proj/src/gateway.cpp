#include "falldet/gateway.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <fstream>

#include "falldet/recordio.hpp"
#include "falldet/tensor.hpp"
#include "nlohmann/json.hpp"

namespace falldet::gw {

using Clock = std::chrono::steady_clock;
using json = nlohmann::json;

namespace {

constexpr double kWindowSpanS = 2.56;
constexpr double kWindowStrideS = 1.28;

// Reads exactly n bytes. 1 = ok, 0 = clean EOF at a frame boundary,
// -1 = timeout, error or mid-frame EOF.
int read_exact(int fd, uint8_t* buf, std::size_t n, double deadline_s) {
    std::size_t got = 0;
    while (got < n) {
        pollfd p{fd, POLLIN, 0};
        int pr = ::poll(&p, 1, int(deadline_s * 1000.0));
        if (pr <= 0) return -1;
        ssize_t r = ::recv(fd, buf + got, n - got, 0);
        if (r == 0) return got == 0 ? 0 : -1;
        if (r < 0) {
            if (errno == EINTR) continue;
            return -1;
        }
        got += std::size_t(r);
    }
    return 1;
}

bool send_all(int fd, const uint8_t* buf, std::size_t n) {
    std::size_t done = 0;
    while (done < n) {
        ssize_t r = ::send(fd, buf + done, n - done, MSG_NOSIGNAL);
        if (r < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        done += std::size_t(r);
    }
    return true;
}

int connect_once(const std::string& host, uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return -1;
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        return -1;
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        return -1;
    }
    return fd;
}

int connect_retry(const std::string& host, uint16_t port, int attempts) {
    for (int i = 0; i < attempts; ++i) {
        int fd = connect_once(host, port);
        if (fd >= 0) return fd;
        std::this_thread::sleep_for(std::chrono::milliseconds(100 * (i + 1)));
    }
    throw IoError("could not connect to " + host + ":" + std::to_string(port));
}

const char* modality_name(uint8_t bits) {
    switch (bits) {
        case 1: return "vibration";
        case 2: return "radar";
        default: return "both";
    }
}

}  // namespace

struct Gateway::Pending {
    wire::Frame frame;
    Clock::time_point arrived;
};

struct Gateway::Work {
    std::optional<wire::Frame> vib;
    std::optional<wire::Frame> radar;
    Clock::time_point last_arrival;
    bool fallback = false;
};

std::string entry_to_json(const DetectionLogEntry& e) {
    json j;
    j["t0_us"] = e.t0_us;
    j["p_fall"] = e.p_fall;
    j["decision"] = e.decision;
    j["latency_ms"] = e.latency_ms;
    j["expert_id"] = e.expert_id;
    j["gamma_mean"] = e.gamma_mean;
    j["fallback"] = e.fallback;
    j["modalities"] = modality_name(e.modalities);
    return j.dump();
}

std::vector<DetectionLogEntry> read_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open detection log " + path);
    std::vector<DetectionLogEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw IoError("malformed detection log line");
        DetectionLogEntry e;
        e.t0_us = j.at("t0_us").get<uint64_t>();
        e.p_fall = j.at("p_fall").get<double>();
        e.decision = j.at("decision").get<bool>();
        e.latency_ms = j.at("latency_ms").get<double>();
        e.expert_id = j.at("expert_id").get<int>();
        e.gamma_mean = j.at("gamma_mean").get<double>();
        e.fallback = j.at("fallback").get<bool>();
        std::string m = j.at("modalities").get<std::string>();
        e.modalities = m == "vibration" ? 1 : m == "radar" ? 2 : 3;
        out.push_back(e);
    }
    return out;
}

Gateway::Gateway(nn::FallModel model, ds::NormStats stats, GatewayConfig cfg)
    : model_(std::move(model)), stats_(std::move(stats)), cfg_(std::move(cfg)) {}

Gateway::~Gateway() { stop(); }

void Gateway::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw IoError("socket creation failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(cfg_.port);
    if (::inet_pton(AF_INET, cfg_.listen_host.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw IoError("bad listen address " + cfg_.listen_host);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listen_fd_, 16) != 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw IoError("cannot listen on " + cfg_.listen_host + ":" +
                      std::to_string(cfg_.port));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);

    if (!cfg_.log_path.empty()) {
        log_file_ = std::fopen(cfg_.log_path.c_str(), "w");
        if (!log_file_) throw IoError("cannot open detection log " + cfg_.log_path);
    }

    running_ = true;
    draining_ = false;
    accept_thread_ = std::thread(&Gateway::accept_loop, this);
    infer_thread_ = std::thread(&Gateway::inference_loop, this);
}

void Gateway::stop() {
    if (!running_.exchange(false)) {
        if (accept_thread_.joinable()) accept_thread_.join();
        if (infer_thread_.joinable()) infer_thread_.join();
        return;
    }
    if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
    if (accept_thread_.joinable()) accept_thread_.join();
    {
        std::lock_guard lk(conn_mu_);
        for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    for (;;) {
        std::thread t;
        {
            std::lock_guard lk(conn_mu_);
            if (conn_threads_.empty()) break;
            t = std::move(conn_threads_.back());
            conn_threads_.pop_back();
        }
        if (t.joinable()) t.join();
    }
    draining_ = true;
    work_cv_.notify_all();
    if (infer_thread_.joinable()) infer_thread_.join();
    if (listen_fd_ >= 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    if (log_file_) {
        std::fclose(log_file_);
        log_file_ = nullptr;
    }
}

GatewayCounters Gateway::counters() const {
    std::lock_guard lk(counter_mu_);
    return counters_;
}

std::vector<DetectionLogEntry> Gateway::log() const {
    std::lock_guard lk(log_mu_);
    return log_;
}

bool Gateway::wait_for_log(std::size_t n, double timeout_s) const {
    auto end = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                  std::chrono::duration<double>(timeout_s));
    for (;;) {
        {
            std::lock_guard lk(log_mu_);
            if (log_.size() >= n) return true;
        }
        if (Clock::now() >= end) return false;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
}

void Gateway::accept_loop() {
    while (running_) {
        pollfd p{listen_fd_, POLLIN, 0};
        int pr = ::poll(&p, 1, 200);
        if (!running_) break;
        if (pr <= 0) continue;
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        std::lock_guard lk(conn_mu_);
        conn_fds_.push_back(fd);
        conn_threads_.emplace_back(&Gateway::connection_loop, this, fd);
        {
            std::lock_guard ck(counter_mu_);
            ++counters_.connections;
        }
    }
}

void Gateway::connection_loop(int fd) {
    std::vector<uint8_t> buf;
    while (running_) {
        uint8_t header[wire::kHeaderSize];
        int r = read_exact(fd, header, wire::kHeaderSize, cfg_.read_deadline_s);
        if (r <= 0) break;  // EOF, deadline or error
        std::size_t total;
        try {
            total = wire::frame_size(header, wire::kHeaderSize);
        } catch (const Error&) {
            // bad magic or version: the stream position is unknown, so the
            // connection cannot be resynchronized
            std::lock_guard ck(counter_mu_);
            ++counters_.frames_dropped;
            break;
        }
        buf.assign(header, header + wire::kHeaderSize);
        buf.resize(total);
        if (read_exact(fd, buf.data() + wire::kHeaderSize, total - wire::kHeaderSize,
                       cfg_.read_deadline_s) != 1)
            break;
        try {
            wire::Frame f = wire::decode_frame(buf.data(), buf.size());
            {
                std::lock_guard ck(counter_mu_);
                ++counters_.frames_ok;
            }
            pair_frame(std::move(f));
        } catch (const Error&) {
            // framing is intact (the declared length was honored), so a
            // corrupt frame is dropped and the stream continues
            std::lock_guard ck(counter_mu_);
            ++counters_.frames_dropped;
        }
    }
    ::close(fd);
}

void Gateway::pair_frame(wire::Frame f) {
    const int idx = f.node_type == wire::NodeType::vibration ? 0 : 1;
    const int other = 1 - idx;
    const double tol_us = cfg_.pair_tolerance_s * 1e6;
    auto now = Clock::now();

    std::lock_guard lk(work_mu_);
    for (auto it = pending_[other].begin(); it != pending_[other].end(); ++it) {
        double gap = double(f.t0_us) - double((*it)->frame.t0_us);
        if (std::abs(gap) <= tol_us) {
            auto w = std::make_unique<Work>();
            if (idx == 0) {
                w->vib = std::move(f);
                w->radar = std::move((*it)->frame);
            } else {
                w->vib = std::move((*it)->frame);
                w->radar = std::move(f);
            }
            w->last_arrival = now;
            pending_[other].erase(it);
            queue_.push_back(std::move(w));
            work_cv_.notify_one();
            return;
        }
    }
    auto p = std::make_unique<Pending>();
    p->frame = std::move(f);
    p->arrived = now;
    pending_[idx].push_back(std::move(p));
}

void Gateway::flush_expired(bool all) {
    auto now = Clock::now();
    const auto limit = std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(cfg_.fallback_timeout_s));
    std::lock_guard lk(work_mu_);
    for (int idx = 0; idx < 2; ++idx) {
        while (!pending_[idx].empty() &&
               (all || now - pending_[idx].front()->arrived >= limit)) {
            auto p = std::move(pending_[idx].front());
            pending_[idx].pop_front();
            auto w = std::make_unique<Work>();
            if (idx == 0)
                w->vib = std::move(p->frame);
            else
                w->radar = std::move(p->frame);
            w->last_arrival = p->arrived;
            w->fallback = true;
            queue_.push_back(std::move(w));
        }
    }
}

void Gateway::inference_loop() {
    for (;;) {
        std::unique_ptr<Work> w;
        {
            std::unique_lock lk(work_mu_);
            work_cv_.wait_for(lk, std::chrono::milliseconds(50),
                              [&] { return !queue_.empty() || draining_.load(); });
            if (!queue_.empty()) {
                w = std::move(queue_.front());
                queue_.pop_front();
            }
        }
        if (w) {
            score(*w);
            continue;
        }
        flush_expired(draining_);
        {
            std::lock_guard lk(work_mu_);
            if (!queue_.empty()) continue;
        }
        if (draining_) break;
    }
}

void Gateway::score(const Work& w) {
    ds::WindowRecord rec;
    rec.t0_us = w.vib ? w.vib->t0_us : w.radar->t0_us;
    rec.vib.assign(std::size_t(ds::kWindowLen) * ds::kVibChannels, 0.0f);
    rec.radar.assign(std::size_t(ds::kWindowLen) * ds::kRadarChannels, 0.0f);
    if (w.vib) {
        std::size_t n = std::min(w.vib->payload.size(), rec.vib.size());
        std::copy_n(w.vib->payload.begin(), n, rec.vib.begin());
    }
    if (w.radar) {
        std::size_t n = std::min(w.radar->payload.size(), rec.radar.size());
        std::copy_n(w.radar->payload.begin(), n, rec.radar.begin());
    }

    DetectionLogEntry e;
    e.t0_us = rec.t0_us;
    e.fallback = w.fallback;
    e.modalities = uint8_t((w.vib ? 1 : 0) | (w.radar ? 2 : 0));
    try {
        ds::PreparedWindow pw = ds::prepare_window(rec, stats_, cfg_.pipeline);
        NoGradGuard ng;
        nn::ForwardOut out = model_.forward(pw.vib, pw.radar);
        e.p_fall = out.prob();
        e.decision = e.p_fall >= 0.5;
        e.expert_id = out.fusion_expert;
        e.gamma_mean = pw.gamma;
    } catch (const Error&) {
        // a window the pipeline cannot score must not kill the service
        e.p_fall = 0.0;
        e.decision = false;
    }
    e.latency_ms =
        std::chrono::duration<double, std::milli>(Clock::now() - w.last_arrival).count();

    {
        std::lock_guard ck(counter_mu_);
        if (w.fallback)
            ++counters_.windows_fallback;
        else
            ++counters_.windows_paired;
    }
    std::lock_guard lk(log_mu_);
    log_.push_back(e);
    if (log_file_) {
        std::string line = entry_to_json(e);
        line.push_back('\n');
        std::fwrite(line.data(), 1, line.size(), log_file_);
        std::fflush(log_file_);
    }
}

std::size_t node_replay(const std::string& recording_dir, const std::string& host,
                        uint16_t port, wire::NodeType type, const ReplayOptions& opt) {
    synth::Recording rec = recordio::read_recording(recording_dir);
    ds::PipelineConfig pcfg;
    ds::AlignedStreams st = ds::preprocess(rec.vib, rec.radar, pcfg);
    std::vector<ds::WindowRecord> wins =
        ds::slice_windows(st.vib, st.radar, rec.labels, st.gamma, 0, 0);

    int fd = connect_retry(host, port, opt.max_retries);
    const auto t_start = Clock::now();
    const auto stride = std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(kWindowStrideS));

    std::size_t sent = 0;
    for (std::size_t k = 0; k < wins.size(); ++k) {
        if (opt.realtime) std::this_thread::sleep_until(t_start + stride * k);
        wire::Frame f;
        f.node_type = type;
        f.node_id = opt.node_id;
        f.seq = uint32_t(k);
        f.t0_us = wins[k].t0_us;
        f.n_samples = uint16_t(ds::kWindowLen);
        f.n_channels = wire::channels_for(type);
        const std::vector<float>& src =
            type == wire::NodeType::vibration ? wins[k].vib : wins[k].radar;
        f.payload = src;
        std::vector<uint8_t> bytes = wire::encode_frame(f);
        if (!send_all(fd, bytes.data(), bytes.size())) {
            ::close(fd);
            fd = connect_retry(host, port, opt.max_retries);
            if (!send_all(fd, bytes.data(), bytes.size())) {
                ::close(fd);
                throw IoError("replay connection lost");
            }
        }
        ++sent;
    }
    ::close(fd);
    return sent;
}

}  // namespace falldet::gw

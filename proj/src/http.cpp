#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "lowres_rag/http.hpp"

#include <httplib.h>

#include <cstdlib>
#include <random>
#include <thread>

#include "lowres_rag/errors.hpp"

namespace lowres_rag {

namespace {

class HttplibTransport final : public HttpTransport {
public:
    HttplibTransport(const std::string& base_url, std::chrono::seconds timeout) : base_url_(base_url), timeout_(timeout) {}

    HttpResponse post(const std::string& path, const std::string& json_body, const HttpHeaders& headers) override {
        // httplib clients are not thread-safe; one per request is cheap enough here.
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(timeout_);
        cli.set_read_timeout(timeout_);
        cli.set_write_timeout(timeout_);
        httplib::Headers h(headers.begin(), headers.end());
        auto res = cli.Post(path, h, json_body, "application/json");
        if (!res) throw RemoteUnavailable(base_url_ + path + ": " + httplib::to_string(res.error()));
        return HttpResponse{res->status, res->body};
    }

private:
    std::string base_url_;
    std::chrono::seconds timeout_;
};

bool retryable(int status) { return status == 429 || status >= 500; }

struct LimiterGuard {
    explicit LimiterGuard(InFlightLimiter& l) : limiter(l) { limiter.acquire(); }
    ~LimiterGuard() { limiter.release(); }
    LimiterGuard(const LimiterGuard&) = delete;
    LimiterGuard& operator=(const LimiterGuard&) = delete;
    InFlightLimiter& limiter;
};

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport(const std::string& base_url, std::chrono::seconds timeout) {
    return std::make_shared<HttplibTransport>(base_url, timeout);
}

InFlightLimiter::InFlightLimiter(std::size_t limit) : limit_(limit == 0 ? 1 : limit) {}

void InFlightLimiter::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return current_ < limit_; });
    ++current_;
    if (current_ > peak_) peak_ = current_;
}

void InFlightLimiter::release() {
    {
        std::lock_guard lock(mu_);
        --current_;
    }
    cv_.notify_one();
}

std::size_t InFlightLimiter::peak() const {
    std::lock_guard lock(mu_);
    return peak_;
}

PostResult post_with_retry(HttpTransport& transport, InFlightLimiter& limiter, const RetryPolicy& policy,
                           const std::string& path, const std::string& body, const HttpHeaders& headers) {
    thread_local std::mt19937 jitter_rng(std::random_device{}());
    std::string last_error = "no attempt made";
    const int attempts = policy.max_attempts < 1 ? 1 : policy.max_attempts;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        try {
            HttpResponse resp;
            {
                LimiterGuard guard(limiter);
                resp = transport.post(path, body, headers);
            }
            if (resp.status >= 200 && resp.status < 300) return PostResult{std::move(resp), attempt};
            if (!retryable(resp.status)) throw RemoteRejected(resp.status, resp.body.substr(0, 200));
            last_error = "HTTP " + std::to_string(resp.status);
        } catch (const RemoteUnavailable& e) {
            last_error = e.what();
        }
        if (attempt < attempts && policy.base_delay.count() > 0) {
            auto delay = policy.base_delay * (1 << (attempt - 1));
            std::uniform_real_distribution<double> dist(0.0, policy.jitter);
            delay += std::chrono::milliseconds(static_cast<long>(delay.count() * dist(jitter_rng)));
            std::this_thread::sleep_for(delay);
        }
    }
    throw RemoteUnavailable(last_error + " after " + std::to_string(attempts) + " attempts");
}

HttpHeaders default_json_headers() {
    HttpHeaders h;
    if (const char* key = std::getenv(kApiKeyEnv); key && *key) h.emplace("Authorization", std::string("Bearer ") + key);
    return h;
}

}  // namespace lowres_rag

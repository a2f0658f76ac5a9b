#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace lowres_rag {

struct HttpResponse {
    int status = 0;
    std::string body;
};

using HttpHeaders = std::multimap<std::string, std::string>;

/// POST-only transport. Implementations throw RemoteUnavailable when the
/// server cannot be reached; HTTP error statuses are returned, not thrown.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& path, const std::string& json_body, const HttpHeaders& headers) = 0;
};

/// cpp-httplib backed transport. `base_url` is scheme://host[:port].
std::shared_ptr<HttpTransport> make_http_transport(const std::string& base_url, std::chrono::seconds timeout);

/// Bounds the number of concurrent requests and remembers the peak.
class InFlightLimiter {
public:
    explicit InFlightLimiter(std::size_t limit);

    void acquire();
    void release();
    std::size_t peak() const;
    std::size_t limit() const noexcept { return limit_; }

private:
    std::size_t limit_;
    std::size_t current_ = 0;
    std::size_t peak_ = 0;
    mutable std::mutex mu_;
    std::condition_variable cv_;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{500};
    double jitter = 0.25;  // fraction of the delay added at random
};

struct PostResult {
    HttpResponse response;
    int attempts = 0;
};

/// Sends with exponential backoff. Network failures, 429 and 5xx are retried;
/// other non-2xx statuses throw RemoteRejected immediately. Exhausting the
/// attempts throws RemoteUnavailable.
PostResult post_with_retry(HttpTransport& transport, InFlightLimiter& limiter, const RetryPolicy& policy,
                           const std::string& path, const std::string& body, const HttpHeaders& headers);

/// Content-Type plus a bearer token from LOWRES_RAG_API_KEY when set.
HttpHeaders default_json_headers();

inline constexpr const char* kApiKeyEnv = "LOWRES_RAG_API_KEY";

}  // namespace lowres_rag

#pragma once

// Live evidence gathering. Needs cpp-httplib built with OpenSSL support;
// the CMake target defines CPPHTTPLIB_OPENSSL_SUPPORT for every consumer.

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>
#include <fcntl.h>

#include <openssl/err.h>
#include <openssl/ssl.h>
#include <openssl/x509.h>
#include <openssl/x509v3.h>

#include <chrono>
#include <ctime>
#include <memory>
#include <semaphore>
#include <string>

#include <httplib.h>

#include "phishlens/content.hpp"

namespace phishlens {

struct FetchConfig {
  std::chrono::milliseconds timeout{10'000};
  int max_redirects = 10;
  std::string user_agent = "phishlens/1.0";
  std::size_t max_body_bytes = 2 * 1024 * 1024;
  // PEM bundle of trusted roots for the certificate check; system roots
  // when empty.
  std::string ca_bundle;
};

/// Resolves `ref` against the absolute URL `base` (RFC 3986 style, without
/// dot-segment removal).
inline std::string resolve_reference(const std::string& base, std::string_view ref) {
  ref = text::trim(ref);
  if (detail::has_scheme_separator(ref)) return std::string(ref);
  const auto sep = base.find("://");
  const std::string scheme = sep == std::string::npos ? "http" : base.substr(0, sep);
  const std::size_t authority_start = sep == std::string::npos ? 0 : sep + 3;
  const std::size_t path_start = std::min(base.find_first_of("/?#", authority_start), base.size());
  const std::string origin = (sep == std::string::npos ? "http://" : std::string{}) + base.substr(0, path_start);
  if (ref.substr(0, 2) == "//") return scheme + ":" + std::string(ref);
  if (ref.empty()) return base;
  if (ref.front() == '/') return origin + std::string(ref);

  std::string path = base.substr(path_start);
  if (auto cut = path.find_first_of("?#"); cut != std::string::npos) path.resize(cut);
  if (ref.front() == '?') return origin + (path.empty() ? "/" : path) + std::string(ref);
  const auto slash = path.rfind('/');
  const std::string directory = slash == std::string::npos ? "/" : path.substr(0, slash + 1);
  return origin + directory + std::string(ref);
}

namespace detail {

inline std::string request_target(const ParsedUrl& url) {
  std::string_view rest = std::string_view(url.raw).substr(url.authority_offset);
  const auto start = rest.find_first_of("/?#");
  if (start == std::string_view::npos) return "/";
  rest = rest.substr(start);
  if (auto hash = rest.find('#'); hash != std::string_view::npos) rest = rest.substr(0, hash);
  if (rest.empty()) return "/";
  std::string target(rest);
  if (target.front() == '?') target.insert(0, "/");
  return target;
}

inline int default_port(const ParsedUrl& url) { return url.scheme == Scheme::https ? 443 : 80; }

inline std::string host_for_socket(const ParsedUrl& url) {
  if (url.host.size() > 2 && url.host.front() == '[') return url.host.substr(1, url.host.size() - 2);
  return url.host;
}

inline bool resolves(const std::string& host) {
  addrinfo hints{};
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  const int rc = getaddrinfo(host.c_str(), nullptr, &hints, &result);
  if (result != nullptr) freeaddrinfo(result);
  return rc == 0;
}

struct FdCloser {
  int fd = -1;
  ~FdCloser() {
    if (fd >= 0) ::close(fd);
  }
};

inline int connect_with_timeout(const std::string& host, int port, std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &result) != 0) return -1;
  std::unique_ptr<addrinfo, decltype(&freeaddrinfo)> guard(result, freeaddrinfo);
  for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    const int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd pfd{fd, POLLOUT, 0};
      if (::poll(&pfd, 1, static_cast<int>(timeout.count())) == 1) {
        int err = 0;
        socklen_t len = sizeof err;
        getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
      }
    }
    if (rc == 0) {
      fcntl(fd, F_SETFL, flags);
      timeval tv{static_cast<time_t>(timeout.count() / 1000), static_cast<suseconds_t>((timeout.count() % 1000) * 1000)};
      setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
      setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
      return fd;
    }
    ::close(fd);
  }
  return -1;
}

inline std::optional<Date> asn1_to_date(const ASN1_TIME* t) {
  std::tm tm{};
  if (t == nullptr || ASN1_TIME_to_tm(t, &tm) != 1) return std::nullopt;
  return make_date(tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday);
}

}  // namespace detail

/// Handshakes with `host:port` and reports the leaf certificate's issuer,
/// validity window and whether the chain (and host name) verify against
/// the configured roots. Empty on any connection or handshake failure.
inline std::optional<TlsFacts> probe_tls(const std::string& host, int port, const FetchConfig& cfg,
                                         Date now = today()) {
  std::unique_ptr<SSL_CTX, decltype(&SSL_CTX_free)> ctx(SSL_CTX_new(TLS_client_method()), SSL_CTX_free);
  if (!ctx) return std::nullopt;
  if (cfg.ca_bundle.empty()) {
    SSL_CTX_set_default_verify_paths(ctx.get());
  } else if (SSL_CTX_load_verify_locations(ctx.get(), cfg.ca_bundle.c_str(), nullptr) != 1) {
    ERR_clear_error();
    return std::nullopt;
  }
  // Verification runs but never aborts the handshake; the outcome is read
  // back from the session.
  SSL_CTX_set_verify(ctx.get(), SSL_VERIFY_NONE, nullptr);

  detail::FdCloser sock{detail::connect_with_timeout(host, port, cfg.timeout)};
  if (sock.fd < 0) return std::nullopt;

  std::unique_ptr<SSL, decltype(&SSL_free)> ssl(SSL_new(ctx.get()), SSL_free);
  if (!ssl) return std::nullopt;
  in6_addr v6{};
  in_addr v4{};
  const bool is_ip = inet_pton(AF_INET, host.c_str(), &v4) == 1 || inet_pton(AF_INET6, host.c_str(), &v6) == 1;
  if (is_ip) {
    X509_VERIFY_PARAM_set1_ip_asc(SSL_get0_param(ssl.get()), host.c_str());
  } else {
    SSL_set_tlsext_host_name(ssl.get(), host.c_str());
    SSL_set1_host(ssl.get(), host.c_str());
  }
  SSL_set_fd(ssl.get(), sock.fd);
  if (SSL_connect(ssl.get()) != 1) {
    ERR_clear_error();
    return std::nullopt;
  }

  std::unique_ptr<X509, decltype(&X509_free)> cert(SSL_get1_peer_certificate(ssl.get()), X509_free);
  if (!cert) {
    SSL_shutdown(ssl.get());
    return std::nullopt;
  }

  TlsFacts facts;
  char org[256] = {0};
  if (X509_NAME_get_text_by_NID(X509_get_issuer_name(cert.get()), NID_organizationName, org, sizeof org) > 0)
    facts.issuer_organization = org;
  facts.issuer_trusted = SSL_get_verify_result(ssl.get()) == X509_V_OK;
  auto not_before = detail::asn1_to_date(X509_get0_notBefore(cert.get()));
  auto not_after = detail::asn1_to_date(X509_get0_notAfter(cert.get()));
  SSL_shutdown(ssl.get());
  if (!not_before || !not_after) return std::nullopt;
  facts.not_before = *not_before;
  facts.not_after = *not_after;
  facts.certificate_age_days = std::max(0LL, days_between(*not_before, now));
  return facts;
}

/// Retrieves `url`, following up to `max_redirects` redirects by hand so
/// every hop is recorded. Never throws: failures land in `fetch_error`.
inline PageSnapshot fetch_page(const std::string& url, const FetchConfig& cfg = {},
                               const PublicSuffixList& suffixes = default_suffix_list()) {
  PageSnapshot snap;
  snap.requested_url = url;
  snap.final_url = url;
  snap.fetched_at = now_timestamp();

  std::string current = url;
  ParsedUrl requested;
  try {
    requested = parse_url(url, suffixes);
    if (requested.scheme_assumed) current = "http://" + std::string(text::trim(url));
  } catch (const Error&) {
    snap.fetch_error = FetchError::dns_failure;
    return snap;
  }

  const auto seconds = static_cast<time_t>(cfg.timeout.count() / 1000);
  const auto micros = static_cast<time_t>((cfg.timeout.count() % 1000) * 1000);

  while (true) {
    ParsedUrl hop;
    try {
      hop = parse_url(current, suffixes);
    } catch (const Error&) {
      snap.fetch_error = FetchError::dns_failure;
      break;
    }
    if (hop.scheme == Scheme::other) {
      snap.fetch_error = FetchError::connection_refused;
      break;
    }
    const std::string host = detail::host_for_socket(hop);
    if (!hop.is_ip_host && !detail::resolves(host)) {
      snap.fetch_error = FetchError::dns_failure;
      break;
    }

    const std::string scheme = hop.scheme == Scheme::https ? "https" : "http";
    httplib::Client client(scheme + "://" + hop.host + ":" + std::to_string(hop.port.value_or(detail::default_port(hop))));
    client.set_follow_location(false);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);
    client.enable_server_certificate_verification(false);

    std::optional<int> status;
    std::string location;
    std::string content_type;
    std::string body;
    bool truncated = false;
    auto result = client.Get(
        detail::request_target(hop), httplib::Headers{{"User-Agent", cfg.user_agent}},
        [&](const httplib::Response& res) {
          status = res.status;
          location = res.get_header_value("Location");
          content_type = res.get_header_value("Content-Type");
          return true;
        },
        [&](const char* data, std::size_t len) {
          const std::size_t room = cfg.max_body_bytes - std::min(cfg.max_body_bytes, body.size());
          body.append(data, std::min(room, len));
          if (len > room) {
            truncated = true;
            return false;
          }
          return true;
        });

    const auto err = result.error();
    if (err != httplib::Error::Success && !(err == httplib::Error::Canceled && truncated)) {
      snap.fetch_error = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                          err == httplib::Error::Write)
                             ? FetchError::timeout
                             : FetchError::connection_refused;
      break;
    }

    if (status && *status >= 300 && *status < 400 && !location.empty()) {
      snap.redirect_chain.push_back(current);
      if (static_cast<int>(snap.redirect_chain.size()) > cfg.max_redirects) {
        snap.fetch_error = FetchError::too_many_redirects;
        break;
      }
      current = resolve_reference(current, location);
      continue;
    }

    snap.final_url = current;
    snap.status = status;
    const std::string type = text::to_lower(content_type);
    if (!type.empty() && type.find("html") == std::string::npos && type.rfind("text/", 0) != 0) {
      snap.fetch_error = FetchError::non_html;
      break;
    }
    snap.body = std::move(body);
    break;
  }
  if (snap.fetch_error) snap.final_url = current;

  if (requested.scheme == Scheme::https && snap.fetch_error != FetchError::dns_failure) {
    snap.tls = probe_tls(detail::host_for_socket(requested), requested.port.value_or(443), cfg);
  }
  return snap;
}

/// Bounds the number of fetches in flight across threads.
class Fetcher {
 public:
  explicit Fetcher(FetchConfig cfg = {}, std::ptrdiff_t max_concurrent = 8)
      : cfg_(std::move(cfg)), slots_(std::max<std::ptrdiff_t>(1, max_concurrent)) {}

  PageSnapshot fetch(const std::string& url, const PublicSuffixList& suffixes = default_suffix_list()) {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<1024>& s;
      ~Release() { s.release(); }
    } release{slots_};
    return fetch_page(url, cfg_, suffixes);
  }

  const FetchConfig& config() const { return cfg_; }

 private:
  FetchConfig cfg_;
  std::counting_semaphore<1024> slots_;
};

}  // namespace phishlens

#include "http.hpp"

#include <httplib.h>

#include "themescope/util.hpp"

namespace themescope::detail {

HttpResponse post_json(const std::string& url, const std::string& api_key, const std::string& body,
                       int timeout_seconds) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error("endpoint must be an absolute URL: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(timeout_seconds, 0);
  client.set_read_timeout(timeout_seconds, 0);
  client.set_write_timeout(timeout_seconds, 0);
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

  HttpResponse out;
  auto res = client.Post(path, headers, body, "application/json");
  if (!res) {
    out.error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

}  // namespace themescope::detail

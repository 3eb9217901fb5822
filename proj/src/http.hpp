#pragma once

#include <string>

namespace themescope::detail {

struct HttpResponse {
  int status = 0;  // 0 when the transport failed
  std::string body;
  std::string error;
};

// POSTs a JSON body to an absolute http(s) URL. Bearer auth when api_key is set.
HttpResponse post_json(const std::string& url, const std::string& api_key, const std::string& body,
                       int timeout_seconds);

}  // namespace themescope::detail

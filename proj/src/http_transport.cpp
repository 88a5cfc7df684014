#include <openssl/evp.h>

#include "cvd/gptjudge.hpp"
#include "cvd/image_io.hpp"

#include "httplib.h"
#include "json.hpp"

namespace cvd {

using nlohmann::json;

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

HttpTransport::HttpTransport(HttpTransportConfig config) : config_(std::move(config)) {}

std::string HttpTransport::request_body(const MessageList& messages) const {
  json msgs = json::array();
  for (const auto& m : messages) {
    if (m.images.empty()) {
      msgs.push_back({{"role", m.role}, {"content", m.text}});
      continue;
    }
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", m.text}});
    for (const auto& img : m.images) {
      const std::string url = "data:image/png;base64," + base64_encode(encode_png(*img));
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
    }
    msgs.push_back({{"role", m.role}, {"content", content}});
  }
  json body{{"model", config_.model}, {"messages", msgs}, {"temperature", config_.temperature}};
  return body.dump();
}

std::string HttpTransport::send(const MessageList& messages) {
  const std::string& url = config_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(Errc::ConfigError, "endpoint must be an absolute URL: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const auto res = client.Post(path, headers, request_body(messages), "application/json");
  if (!res) {
    throw Error(Errc::TransportError, "request to " + url + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(Errc::TransportError, "HTTP " + std::to_string(res->status) + " from " + url);
  }
  const json reply = json::parse(res->body, nullptr, false);
  if (reply.is_discarded()) throw Error(Errc::TransportError, "endpoint returned non-JSON body");
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw Error(Errc::TransportError, "response lacks choices[0].message.content");
  }
}

}  // namespace cvd

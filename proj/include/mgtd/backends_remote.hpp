#pragma once

#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "mgtd/backends.hpp"
#include "mgtd/error.hpp"

namespace mgtd::backends {

// Wire format, version 1. Requests and responses are JSON with a "v" field.
//   POST /v1/encode        {"v":1,"text":s}            -> {"v":1,"d":n,"hidden":[[..]],"spans":[[b,e]..],"truncated":b}
//   POST /v1/encode_batch  {"v":1,"texts":[s..]}       -> {"v":1,"outputs":[..]}
//   POST /v1/score         {"v":1,"text":s}            -> {"v":1,"logprobs":[..],"ranks":[..],"spans":[[b,e]..]}
//   POST /v1/score_batch   {"v":1,"texts":[s..]}       -> {"v":1,"outputs":[..]}
//   POST /v1/fill          {"v":1,"text":s,"seed":n}   -> {"v":1,"status":"ok"|"short_output"|"excess_output","fills":[s..]}
//   POST /v1/fill_batch    {"v":1,"requests":[{"text":s,"seed":n}..]} -> {"v":1,"outputs":[..]}
inline constexpr int kWireVersion = 1;

namespace wire {

inline nlohmann::json encode_to_json(const EncoderOutput& out) {
  nlohmann::json spans = nlohmann::json::array();
  for (auto [b, e] : out.subword_spans) spans.push_back({b, e});
  return {{"d", out.d}, {"hidden", out.hidden}, {"spans", spans}, {"truncated", out.truncated}};
}

inline EncoderOutput encode_from_json(const nlohmann::json& j) {
  EncoderOutput out;
  out.d = j.at("d").get<int>();
  out.hidden = j.at("hidden").get<std::vector<std::vector<double>>>();
  for (const auto& s : j.at("spans")) {
    out.subword_spans.emplace_back(s.at(0).get<size_t>(), s.at(1).get<size_t>());
  }
  out.truncated = j.value("truncated", false);
  return out;
}

inline nlohmann::json score_to_json(const CausalScore& cs) {
  nlohmann::json spans = nlohmann::json::array();
  for (auto [b, e] : cs.token_spans) spans.push_back({b, e});
  return {{"logprobs", cs.token_logprobs}, {"ranks", cs.token_ranks}, {"spans", spans}};
}

inline CausalScore score_from_json(const nlohmann::json& j) {
  CausalScore cs;
  cs.token_logprobs = j.at("logprobs").get<std::vector<double>>();
  cs.token_ranks = j.at("ranks").get<std::vector<int>>();
  for (const auto& s : j.at("spans")) {
    cs.token_spans.emplace_back(s.at(0).get<size_t>(), s.at(1).get<size_t>());
  }
  return cs;
}

inline const char* status_name(FillStatus s) {
  switch (s) {
    case FillStatus::Ok: return "ok";
    case FillStatus::ShortOutput: return "short_output";
    default: return "excess_output";
  }
}

inline FillStatus status_from_name(const std::string& s) {
  if (s == "ok") return FillStatus::Ok;
  if (s == "short_output") return FillStatus::ShortOutput;
  if (s == "excess_output") return FillStatus::ExcessOutput;
  throw BackendError("unknown fill status: " + s);
}

}  // namespace wire

namespace detail {

inline nlohmann::json post_json(httplib::Client& client, const std::string& path,
                                const nlohmann::json& body) {
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) throw BackendError("backend unreachable at " + path);
  if (res->status != 200) {
    throw BackendError("backend error " + std::to_string(res->status) + " at " + path +
                       ": " + res->body);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("backend returned invalid JSON: ") + e.what());
  }
  if (j.value("v", 0) != kWireVersion) throw BackendError("backend wire version mismatch");
  return j;
}

}  // namespace detail

class RemoteEncoder : public Encoder {
 public:
  explicit RemoteEncoder(const std::string& base_url) : client_(base_url.c_str()) {
    client_.set_connection_timeout(5);
    client_.set_read_timeout(120);
  }

  EncoderOutput encode(const std::string& text) override {
    auto j = detail::post_json(client_, "/v1/encode", {{"v", kWireVersion}, {"text", text}});
    EncoderOutput out = wire::encode_from_json(j);
    d_ = out.d;
    return out;
  }

  std::vector<EncoderOutput> encode_batch(const std::vector<std::string>& texts) {
    auto j = detail::post_json(client_, "/v1/encode_batch",
                               {{"v", kWireVersion}, {"texts", texts}});
    std::vector<EncoderOutput> out;
    for (const auto& o : j.at("outputs")) out.push_back(wire::encode_from_json(o));
    return out;
  }

  int hidden_width() const override { return d_; }

 private:
  mutable httplib::Client client_;
  int d_ = 0;
};

class RemoteScorer : public CausalScorer {
 public:
  explicit RemoteScorer(const std::string& base_url) : client_(base_url.c_str()) {
    client_.set_connection_timeout(5);
    client_.set_read_timeout(120);
  }

  CausalScore score(const std::string& text) override {
    auto j = detail::post_json(client_, "/v1/score", {{"v", kWireVersion}, {"text", text}});
    return wire::score_from_json(j);
  }

  std::vector<CausalScore> score_batch(const std::vector<std::string>& texts) {
    auto j = detail::post_json(client_, "/v1/score_batch",
                               {{"v", kWireVersion}, {"texts", texts}});
    std::vector<CausalScore> out;
    for (const auto& o : j.at("outputs")) out.push_back(wire::score_from_json(o));
    return out;
  }

 private:
  httplib::Client client_;
};

class RemoteFiller : public MaskFiller {
 public:
  explicit RemoteFiller(const std::string& base_url) : client_(base_url.c_str()) {
    client_.set_connection_timeout(5);
    client_.set_read_timeout(120);
  }

  FillResponse fill(const std::string& text, uint64_t seed) override {
    auto j = detail::post_json(client_, "/v1/fill",
                               {{"v", kWireVersion}, {"text", text}, {"seed", seed}});
    FillResponse resp;
    resp.status = wire::status_from_name(j.at("status").get<std::string>());
    resp.fills = j.at("fills").get<std::vector<std::string>>();
    return resp;
  }

  // one shared HTTP client
  bool supports_concurrent_requests() const override { return false; }

  std::vector<FillResponse> fill_batch(const std::vector<std::pair<std::string, uint64_t>>& reqs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [text, seed] : reqs) arr.push_back({{"text", text}, {"seed", seed}});
    auto j = detail::post_json(client_, "/v1/fill_batch",
                               {{"v", kWireVersion}, {"requests", arr}});
    std::vector<FillResponse> out;
    for (const auto& o : j.at("outputs")) {
      FillResponse resp;
      resp.status = wire::status_from_name(o.at("status").get<std::string>());
      resp.fills = o.at("fills").get<std::vector<std::string>>();
      out.push_back(std::move(resp));
    }
    return out;
  }

 private:
  httplib::Client client_;
};

/// Registers the wire-format routes on a server, delegating to local
/// backends. Null backends leave their routes unregistered.
inline void attach_backend_routes(httplib::Server& server,
                                  std::shared_ptr<Encoder> encoder,
                                  std::shared_ptr<CausalScorer> scorer,
                                  std::shared_ptr<MaskFiller> filler) {
  auto handle = [](httplib::Response& res, const std::function<nlohmann::json(const nlohmann::json&)>& fn,
                   const httplib::Request& req) {
    try {
      nlohmann::json body = nlohmann::json::parse(req.body);
      if (body.value("v", 0) != kWireVersion) {
        res.status = 400;
        res.set_content(R"({"error":"wire version mismatch"})", "application/json");
        return;
      }
      nlohmann::json out = fn(body);
      out["v"] = kWireVersion;
      res.set_content(out.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  };

  if (encoder) {
    server.Post("/v1/encode", [=](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&](const nlohmann::json& b) {
        return wire::encode_to_json(encoder->encode(b.at("text").get<std::string>()));
      }, req);
    });
    server.Post("/v1/encode_batch", [=](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&](const nlohmann::json& b) {
        nlohmann::json outs = nlohmann::json::array();
        for (const auto& t : b.at("texts")) {
          outs.push_back(wire::encode_to_json(encoder->encode(t.get<std::string>())));
        }
        return nlohmann::json{{"outputs", outs}};
      }, req);
    });
  }
  if (scorer) {
    server.Post("/v1/score", [=](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&](const nlohmann::json& b) {
        return wire::score_to_json(scorer->score(b.at("text").get<std::string>()));
      }, req);
    });
    server.Post("/v1/score_batch", [=](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&](const nlohmann::json& b) {
        nlohmann::json outs = nlohmann::json::array();
        for (const auto& t : b.at("texts")) {
          outs.push_back(wire::score_to_json(scorer->score(t.get<std::string>())));
        }
        return nlohmann::json{{"outputs", outs}};
      }, req);
    });
  }
  if (filler) {
    auto fill_one = [filler](const nlohmann::json& b) {
      FillResponse r = filler->fill(b.at("text").get<std::string>(),
                                    b.value("seed", uint64_t{0}));
      return nlohmann::json{{"status", wire::status_name(r.status)}, {"fills", r.fills}};
    };
    server.Post("/v1/fill", [=](const httplib::Request& req, httplib::Response& res) {
      handle(res, fill_one, req);
    });
    server.Post("/v1/fill_batch", [=](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&](const nlohmann::json& b) {
        nlohmann::json outs = nlohmann::json::array();
        for (const auto& r : b.at("requests")) outs.push_back(fill_one(r));
        return nlohmann::json{{"outputs", outs}};
      }, req);
    });
  }
}

}  // namespace mgtd::backends

// SPDX-License-Identifier: Apache-2.0
#include "premier/service.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <httplib.h>

#include "premier/justification.hpp"
#include "premier/metrics.hpp"

namespace premier {

using nlohmann::json;

struct Service::State {
  PremierModel model;
  ModelMetadata metadata;
  std::string hash;
  DrugValues drugs;
};

Service::Service(LoadedModel loaded) {
  auto drugs = compute_drug_values(loaded.model);
  state_ = std::make_shared<const State>(
      State{std::move(loaded.model), std::move(loaded.metadata), std::move(loaded.hash), std::move(drugs)});
}

const PremierModel& Service::model() const {
  if (!state_) throw ModelUnavailable();
  return state_->model;
}

const Vocabularies& Service::vocabularies() const {
  if (!state_) throw ModelUnavailable();
  return state_->metadata.vocabularies;
}

namespace {

struct ParsedRequest {
  PatientRecord record;
  std::vector<UnrecognizedCode> unrecognized;
  Real threshold = 0.5;
  std::size_t top_n = 2;
  HistoryMode history = HistoryMode::Recorded;
};

std::vector<std::string> code_list(const json& visit, const char* key, const std::string& path) {
  std::vector<std::string> out;
  if (!visit.contains(key)) return out;
  const auto& arr = visit.at(key);
  const std::string field = path + "." + key;
  if (!arr.is_array()) throw RequestError(field, "expected an array of code strings");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_string()) throw RequestError(field + "[" + std::to_string(i) + "]", "expected a code string");
    out.push_back(arr[i].get<std::string>());
  }
  return out;
}

ParsedRequest parse_request(const json& request, const Vocabularies& vocabs, const std::string& prefix) {
  auto at = [&prefix](const std::string& f) { return prefix.empty() ? f : prefix + "." + f; };
  if (!request.is_object()) throw RequestError(prefix, "expected an object");
  for (const auto& [key, _] : request.items())
    if (key != "visits" && key != "options") throw RequestError(at(key), "unknown field");
  if (!request.contains("visits")) throw RequestError(at("visits"), "required field missing");
  const auto& visits = request.at("visits");
  if (!visits.is_array()) throw RequestError(at("visits"), "expected an array of visits");
  if (visits.empty()) throw RequestError(at("visits"), "must contain at least one visit");

  ParsedRequest out;
  out.record.patient_id = "request";
  for (std::size_t t = 0; t < visits.size(); ++t) {
    const std::string path = at("visits") + "[" + std::to_string(t) + "]";
    const auto& v = visits[t];
    if (!v.is_object()) throw RequestError(path, "expected an object with d, p, m");
    for (const auto& [key, _] : v.items())
      if (key != "d" && key != "p" && key != "m") throw RequestError(path + "." + key, "unknown field");
    CodedVisit coded{code_list(v, "d", path), code_list(v, "p", path), code_list(v, "m", path)};
    if (t + 1 == visits.size()) {
      if (!coded.medications.empty()) throw RequestError(path + ".m", "the final visit must not list medications");
      if (coded.diagnoses.empty()) throw RequestError(path + ".d", "the final visit needs at least one diagnosis");
    }
    out.record.visits.push_back(resolve_visit(coded, vocabs, t, out.unrecognized));
  }

  if (request.contains("options")) {
    const auto& o = request.at("options");
    if (!o.is_object()) throw RequestError(at("options"), "expected an object");
    for (const auto& [key, value] : o.items()) {
      const std::string field = at("options") + "." + key;
      if (key == "threshold") {
        if (!value.is_number()) throw RequestError(field, "expected a number");
        out.threshold = value.get<Real>();
        if (!(out.threshold > 0 && out.threshold < 1)) throw RequestError(field, "must lie strictly between 0 and 1");
      } else if (key == "top_n") {
        if (!value.is_number_integer() || value.get<long long>() < 0)
          throw RequestError(field, "expected a nonnegative integer");
        out.top_n = value.get<std::size_t>();
      } else if (key == "history") {
        if (!value.is_string()) throw RequestError(field, "expected \"recorded\" or \"predicted\"");
        const auto mode = value.get<std::string>();
        if (mode == "recorded")
          out.history = HistoryMode::Recorded;
        else if (mode == "predicted")
          out.history = HistoryMode::Predicted;
        else
          throw RequestError(field, "expected \"recorded\" or \"predicted\"");
      } else {
        throw RequestError(field, "unknown option");
      }
    }
  }
  return out;
}

json source_object(const SourceArray& values) {
  json out = json::object();
  for (std::size_t s = 0; s < kNumSources; ++s) out[std::string(to_string(static_cast<Source>(s)))] = values[s];
  return out;
}

json sign_object(const std::array<int, kNumSources>& signs) {
  json out = json::object();
  for (std::size_t s = 0; s < kNumSources; ++s) out[std::string(to_string(static_cast<Source>(s)))] = signs[s];
  return out;
}

json contributor_json(const Contributor& c, const Vocabularies& vocabs) {
  json out = {{"source", to_string(c.source)},
              {"label", contributor_label(c, vocabs)},
              {"score", c.raw},
              {"percent", 100.0 * c.share}};
  out["visit"] = c.visit ? json(*c.visit) : json(nullptr);
  return out;
}

std::vector<ContributionBreakdown> final_visit_breakdowns(const PremierModel& model, const ParsedRequest& req,
                                                          const DrugValues& drugs) {
  Tape tape(false);
  ForwardOptions options;
  options.history = req.history;
  options.threshold = req.threshold;
  const auto state = constant_drugs(tape, drugs);
  const auto forward = forward_patient(tape, model, req.record, options, &state);
  const std::size_t last = req.record.visits.size() - 1;
  std::vector<ContributionBreakdown> out;
  for (std::size_t j = 0; j < model.config().n_medications; ++j) {
    auto b = compute_contributions(model, req.record, forward, last, j);
    b.predicted = b.probability > req.threshold;
    out.push_back(std::move(b));
  }
  return out;
}

const char* kind_name(CodeKind kind) {
  switch (kind) {
    case CodeKind::Diagnosis: return "diagnosis";
    case CodeKind::Procedure: return "procedure";
    case CodeKind::Medication: return "medication";
  }
  return "unknown";
}

json error_body(const std::string& message, const std::string& field) {
  json out = {{"error", message}};
  if (!field.empty()) out["field"] = field;
  return out;
}

}  // namespace

json Service::health() const {
  if (!state_) return {{"status", "unavailable"}, {"error", "no model loaded"}};
  return {{"status", "ok"},
          {"model_hash", state_->hash},
          {"label", state_->model.config().ablation.label()},
          {"version", kServiceVersion}};
}

json Service::recommend(const json& request) const {
  if (!state_) throw ModelUnavailable();
  const auto& model = state_->model;
  const auto& vocabs = state_->metadata.vocabularies;
  const auto req = parse_request(request, vocabs, "");
  const auto breakdowns = final_visit_breakdowns(model, req, state_->drugs);

  std::vector<std::size_t> order(breakdowns.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return breakdowns[a].probability > breakdowns[b].probability;
  });

  json medications = json::array();
  json recommended = json::array();
  std::vector<ContributionBreakdown> chosen;
  IndexSet predicted;
  for (std::size_t j : order) {
    const auto& b = breakdowns[j];
    medications.push_back({{"code", vocabs.vocab_m.code(j)}, {"probability", b.probability}, {"predicted", b.predicted}});
    if (!b.predicted) continue;
    predicted.push_back(j);
    chosen.push_back(b);
    const auto just = normalize_and_rank(b, req.top_n);
    json top = json::array();
    for (const auto& c : just.top) top.push_back(contributor_json(c, vocabs));
    recommended.push_back({{"code", vocabs.vocab_m.code(j)},
                           {"probability", b.probability},
                           {"logit", b.logit},
                           {"baseline", b.bias},
                           {"top_contributors", top},
                           {"shares", source_object(just.shares)},
                           {"signs", sign_object(just.signs)},
                           {"degenerate", just.degenerate}});
  }

  predicted = normalize(predicted);
  json warnings = json::array();
  const MatrixX& a_d = model.interaction().weights();
  for (std::size_t x = 0; x < predicted.size(); ++x)
    for (std::size_t y = x + 1; y < predicted.size(); ++y)
      if (a_d(static_cast<Eigen::Index>(predicted[x]), static_cast<Eigen::Index>(predicted[y])) != 0)
        warnings.push_back({vocabs.vocab_m.code(predicted[x]), vocabs.vocab_m.code(predicted[y])});

  json unrecognized = json::array();
  for (const auto& u : req.unrecognized)
    unrecognized.push_back({{"kind", kind_name(u.kind)}, {"code", u.code}, {"visit", u.visit}});

  return {{"model",
           {{"hash", state_->hash},
            {"label", model.config().ablation.label()},
            {"version", kServiceVersion},
            {"checkpoint_version", kCheckpointVersion}}},
          {"threshold", req.threshold},
          {"top_n", req.top_n},
          {"history", req.history == HistoryMode::Recorded ? "recorded" : "predicted"},
          {"medications", medications},
          {"recommended", recommended},
          {"source_distribution", chosen.empty() ? json(nullptr) : source_object(source_distribution(chosen))},
          {"ddi_warnings", warnings},
          {"unrecognized", unrecognized}};
}

json recommendation_diff(const json& base, const json& modified) {
  auto predicted_set = [](const json& r) {
    std::vector<std::string> out;
    for (const auto& m : r.at("recommended")) out.push_back(m.at("code").get<std::string>());
    std::sort(out.begin(), out.end());
    return out;
  };
  auto probabilities = [](const json& r) {
    std::map<std::string, Real> out;
    for (const auto& m : r.at("medications")) out[m.at("code").get<std::string>()] = m.at("probability").get<Real>();
    return out;
  };
  auto shares = [](const json& r) {
    std::map<std::string, json> out;
    for (const auto& m : r.at("recommended")) out[m.at("code").get<std::string>()] = m.at("shares");
    return out;
  };

  const auto pb = predicted_set(base), pm = predicted_set(modified);
  json added = json::array(), removed = json::array();
  for (const auto& c : pm)
    if (!std::binary_search(pb.begin(), pb.end(), c)) added.push_back(c);
  for (const auto& c : pb)
    if (!std::binary_search(pm.begin(), pm.end(), c)) removed.push_back(c);

  json probability_deltas = json::array();
  const auto prb = probabilities(base), prm = probabilities(modified);
  for (const auto& [code, p0] : prb) {
    auto it = prm.find(code);
    if (it == prm.end()) continue;
    if (it->second != p0)
      probability_deltas.push_back({{"code", code}, {"base", p0}, {"modified", it->second}, {"delta", it->second - p0}});
  }

  json share_deltas = json::array();
  const auto sb = shares(base), sm = shares(modified);
  for (const auto& [code, s0] : sb) {
    auto it = sm.find(code);
    if (it == sm.end()) continue;
    json deltas = json::object();
    bool any = false;
    for (const auto& [source, value] : s0.items()) {
      const Real d = it->second.at(source).get<Real>() - value.get<Real>();
      deltas[source] = d;
      any = any || d != 0;
    }
    if (any) share_deltas.push_back({{"code", code}, {"deltas", deltas}});
  }
  return {{"added", added}, {"removed", removed}, {"probability_deltas", probability_deltas}, {"share_deltas", share_deltas}};
}

json Service::whatif(const json& request) const {
  if (!state_) throw ModelUnavailable();
  if (!request.is_object()) throw RequestError("", "expected an object with base and modified");
  for (const auto& [key, _] : request.items())
    if (key != "base" && key != "modified") throw RequestError(key, "unknown field");
  if (!request.contains("base")) throw RequestError("base", "required field missing");
  if (!request.contains("modified")) throw RequestError("modified", "required field missing");
  auto prefixed = [this](const json& body, const std::string& prefix) {
    try {
      return recommend(body);
    } catch (const RequestError& e) {
      const std::string field = e.field().empty() ? prefix : prefix + "." + e.field();
      std::string what = e.what();
      if (!e.field().empty()) what = what.substr(e.field().size() + 2);
      throw RequestError(field, what);
    }
  };
  json base = prefixed(request.at("base"), "base");
  json modified = prefixed(request.at("modified"), "modified");
  json diff = recommendation_diff(base, modified);
  return {{"base", std::move(base)}, {"modified", std::move(modified)}, {"diff", std::move(diff)}};
}

json Service::explain(const json& request, const std::string& medication) const {
  if (!state_) throw ModelUnavailable();
  const auto& model = state_->model;
  const auto& vocabs = state_->metadata.vocabularies;
  const auto req = parse_request(request, vocabs, "");
  const auto j = vocabs.vocab_m.find(medication);
  if (!j) throw RequestError("medication", "unknown medication code '" + medication + "'");
  const auto b = final_visit_breakdowns(model, req, state_->drugs).at(*j);
  json elements = json::array();
  for (const auto& e : b.elements) {
    Contributor c{e.source, e.visit, e.code, e.raw, 0};
    elements.push_back({{"source", to_string(e.source)},
                        {"label", contributor_label(c, vocabs)},
                        {"visit", e.visit ? json(*e.visit) : json(nullptr)},
                        {"score", e.raw}});
  }
  const auto just = normalize_and_rank(b, req.top_n);
  json top = json::array();
  for (const auto& c : just.top) top.push_back(contributor_json(c, vocabs));
  return {{"code", medication},
          {"probability", b.probability},
          {"predicted", b.predicted},
          {"logit", b.logit},
          {"baseline", b.bias},
          {"residual", b.residual()},
          {"totals", source_object(b.totals)},
          {"shares", source_object(b.shares)},
          {"signs", sign_object(b.signs)},
          {"degenerate", b.degenerate},
          {"top_contributors", top},
          {"elements", elements}};
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& body) const {
  const bool known = path == "/health" || path == "/recommend" || path == "/whatif";
  if (!known) return {404, error_body("no such endpoint: " + path, "").dump()};
  const std::string expected = path == "/health" ? "GET" : "POST";
  if (method != expected) return {405, error_body(path + " expects " + expected, "").dump()};
  if (path == "/health") return {loaded() ? 200 : 503, health().dump()};
  if (!loaded()) return {503, error_body("no model loaded", "").dump()};
  json request;
  try {
    request = json::parse(body);
  } catch (const json::parse_error& e) {
    return {400, error_body(std::string("body is not valid JSON: ") + e.what(), "").dump()};
  }
  try {
    return {200, (path == "/recommend" ? recommend(request) : whatif(request)).dump()};
  } catch (const RequestError& e) {
    return {400, error_body(e.what(), e.field()).dump()};
  } catch (const ModelUnavailable& e) {
    return {503, error_body(e.what(), "").dump()};
  } catch (const std::exception& e) {
    return {500, error_body(e.what(), "").dump()};
  }
}

struct HttpServer::Impl {
  explicit Impl(const Service& s) : service(s) {}
  const Service& service;
  httplib::Server server;
};

HttpServer::HttpServer(const Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& server = impl_->server;
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const auto out = impl_->service.handle(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  server.Get("/health", route);
  server.Post("/recommend", route);
  server.Post("/whatif", route);
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.set_error_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (res.status != 404 && res.status != 405) return;
    const auto out = impl_->service.handle(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0)
    bound = impl_->server.bind_to_any_port(host);
  else if (!impl_->server.bind_to_port(host, port))
    bound = -1;
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace premier

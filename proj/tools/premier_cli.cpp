// SPDX-License-Identifier: Apache-2.0
//
// premier: generate | train | eval | recommend | explain | serve
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "premier/checkpoint.hpp"
#include "premier/drug_graph.hpp"
#include "premier/ehr.hpp"
#include "premier/error.hpp"
#include "premier/metrics.hpp"
#include "premier/service.hpp"
#include "premier/synthetic.hpp"
#include "premier/trainer.hpp"

namespace {

using namespace premier;

std::string read_text(const std::string& path) {
  if (path == "-") return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_request(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("request is not valid JSON: ") + e.what(), 0);
  }
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

LossWeights parse_weights(const std::string& text) {
  std::vector<Real> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      values.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("loss weights must be three comma-separated numbers, got '" + text + "'");
    }
  }
  if (values.size() != 3) throw ConfigError("loss weights must be three comma-separated numbers, got '" + text + "'");
  LossWeights w{values[0], values[1], values[2]};
  w.validate();
  return w;
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown graph activation '" + name + "'");
}

struct GenerateArgs {
  std::string generator;
  std::uint64_t seed = 1;
  std::string cohort_out = "cohort.jsonl";
  std::string interactions_out = "interactions.tsv";
  std::string rules_out;
};

struct TrainArgs {
  std::string cohort;
  std::string interactions;
  std::string model_out = "model.ckpt";
  std::string log_out;
  std::size_t epochs = 40;
  double lr = 1e-4;
  double dropout = 0.4;
  long embed = 64;
  long hidden = 64;
  std::uint64_t seed = 1;
  std::size_t min_visits = 2;
  std::size_t cap = 40;
  std::string weights = "0.79,0.01,0.2";
  std::string activation = "tanh";
  bool attention_bias = false;
  std::vector<std::string> ablate;
  bool quiet = false;
};

struct EvalArgs {
  std::string model;
  std::string cohort;
  std::string split = "test";
  bool baseline = false;
  long k = -1;
  std::string history = "recorded";
  double threshold = 0.5;
  std::string csv_out;
  std::string report_out;
  bool header = true;
};

struct RequestArgs {
  std::string model;
  std::string request = "-";
  std::string medication;
};

struct ServeArgs {
  std::string model;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int run_generate(const GenerateArgs& a) {
  GeneratorConfig config = a.generator.empty() ? GeneratorConfig{} : load_generator_config(a.generator);
  const auto synthetic = generate_synthetic_cohort(config, a.seed);
  save_cohort(synthetic.cohort, a.cohort_out);
  save_interactions(synthetic.interactions, a.interactions_out);
  if (!a.rules_out.empty()) {
    auto out = open_output(a.rules_out);
    const auto& c = synthetic.cohort;
    for (const auto& rule : synthetic.rules) {
      out << "rule =";
      for (std::size_t i = 0; i < rule.antecedent.size(); ++i) out << (i ? "," : " ") << c.vocab_d.code(rule.antecedent[i]);
      out << " ->";
      for (std::size_t i = 0; i < rule.consequent.size(); ++i) out << (i ? "," : " ") << c.vocab_m.code(rule.consequent[i]);
      out << '\n';
    }
  }
  std::cout << "patients=" << synthetic.cohort.size() << " visits=" << synthetic.cohort.num_visits()
            << " rules=" << synthetic.rules.size() << " interaction_pairs=" << synthetic.interactions.size() << '\n';
  return 0;
}

int run_train(const TrainArgs& a) {
  TrainConfig config;
  config.epochs = a.epochs;
  config.learning_rate = a.lr;
  config.dropout = a.dropout;
  config.embed_size = a.embed;
  config.hidden_size = a.hidden;
  config.seed = a.seed;
  config.weights = parse_weights(a.weights);
  config.graph_activation = parse_activation(a.activation);
  config.attention_bias = a.attention_bias;
  for (const auto& flag : a.ablate) config.ablation.disable(flag);

  const Cohort cohort = filter_min_visits(load_cohort(a.cohort), a.min_visits);
  const auto split = split_cohort(cohort, SplitRatios{}, a.seed);
  DrugGraph interaction = a.interactions.empty()
                              ? DrugGraph(GraphKind::Interaction, MatrixX::Zero(static_cast<Eigen::Index>(cohort.vocab_m.size()),
                                                                                static_cast<Eigen::Index>(cohort.vocab_m.size())))
                              : build_interaction(std::filesystem::path(a.interactions), cohort.vocab_m, a.cap).graph;

  const auto result = train(split, interaction, config, [&a](const EpochLog& e) {
    if (!a.quiet)
      std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " val_jaccard " << e.val_jaccard << " val_ddi "
                << e.val_ddi << '\n';
  });

  ModelMetadata metadata;
  metadata.vocabularies = cohort.vocabularies();
  for (const auto& r : split.train.records) metadata.train_ids.push_back(r.patient_id);
  for (const auto& r : split.validation.records) metadata.validation_ids.push_back(r.patient_id);
  for (const auto& r : split.test.records) metadata.test_ids.push_back(r.patient_id);
  metadata.seed = a.seed;
  metadata.best_epoch = result.best_epoch;
  metadata.best_val_jaccard = result.best_val_jaccard;
  save_model(result.best, metadata, a.model_out);
  if (!a.log_out.empty()) {
    auto out = open_output(a.log_out);
    write_epoch_log(result.log, out);
  }
  std::cout << "label=" << config.ablation.label() << " best_epoch=" << result.best_epoch
            << " best_val_jaccard=" << result.best_val_jaccard << " checkpoint=" << a.model_out << '\n';
  return 0;
}

int run_eval(const EvalArgs& a) {
  const auto loaded = load_model(a.model);
  const Cohort cohort = load_cohort(a.cohort);
  const auto& md = loaded.metadata;
  Cohort subset;
  if (a.split == "test")
    subset = select_patients(cohort, md.test_ids);
  else if (a.split == "validation")
    subset = select_patients(cohort, md.validation_ids);
  else if (a.split == "train")
    subset = select_patients(cohort, md.train_ids);
  else if (a.split == "all")
    subset = cohort;
  else
    throw ConfigError("--split must be test, validation, train, or all");
  if (subset.vocab_m.codes() != md.vocabularies.vocab_m.codes() || subset.vocab_d.codes() != md.vocabularies.vocab_d.codes() ||
      subset.vocab_p.codes() != md.vocabularies.vocab_p.codes())
    throw DataError("cohort vocabularies differ from the checkpoint's");

  const HistoryMode history = a.history == "predicted" ? HistoryMode::Predicted : HistoryMode::Recorded;
  if (a.history != "predicted" && a.history != "recorded") throw ConfigError("--history must be recorded or predicted");
  const MatrixX& a_d = loaded.model.interaction().weights();
  std::vector<MetricsReport> reports;
  reports.push_back(evaluate(subset, model_predictor(loaded.model, history, a.threshold), a_d,
                             loaded.model.config().ablation.label()));
  if (a.baseline) {
    const Cohort train = select_patients(cohort, md.train_ids);
    const std::size_t k = a.k >= 0 ? static_cast<std::size_t>(a.k) : mean_prescription_count(train);
    const FrequencyBaseline baseline(train, k);
    reports.push_back(evaluate(subset, baseline, a_d, "frequency-top-" + std::to_string(k)));
  }

  std::ostringstream csv;
  if (a.header) csv << metrics_csv_header() << '\n';
  for (const auto& r : reports) csv << metrics_csv_row(r) << '\n';
  std::cout << csv.str();
  if (!a.csv_out.empty()) open_output(a.csv_out) << csv.str();
  if (!a.report_out.empty()) {
    auto out = open_output(a.report_out);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      if (i) out << '\n';
      write_metrics_report(reports[i], out);
    }
  }
  return 0;
}

int run_recommend(const RequestArgs& a) {
  const Service service(load_model(a.model));
  std::cout << service.recommend(read_request(a.request)).dump(2) << '\n';
  return 0;
}

int run_explain(const RequestArgs& a) {
  const Service service(load_model(a.model));
  const auto request = read_request(a.request);
  if (!a.medication.empty()) {
    std::cout << service.explain(request, a.medication).dump(2) << '\n';
    return 0;
  }
  const auto response = service.recommend(request);
  nlohmann::json out = {{"recommended", response.at("recommended")},
                        {"source_distribution", response.at("source_distribution")},
                        {"unrecognized", response.at("unrecognized")}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int run_serve(const ServeArgs& a) {
  const Service service(load_model(a.model));
  HttpServer server(service);
  const int port = server.bind(a.host, a.port);
  std::cout << "listening on " << a.host << ':' << port << " model " << service.health().at("model_hash").get<std::string>()
            << std::endl;
  server.listen();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PREMIER medication recommender"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file with option values, one [section] per subcommand");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic cohort and interaction file");
  generate->add_option("--generator", gen.generator, "Generator settings file (key = value)");
  generate->add_option("--seed", gen.seed, "Random seed");
  generate->add_option("--out", gen.cohort_out, "Cohort output (JSON lines)");
  generate->add_option("--interactions", gen.interactions_out, "Interaction pair output (TSV)");
  generate->add_option("--rules", gen.rules_out, "Planted rules output");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model and save the best validation checkpoint");
  train_cmd->add_option("--cohort", tr.cohort, "Cohort file (JSON lines)")->required();
  train_cmd->add_option("--interactions", tr.interactions, "Interaction pair file (TSV)");
  train_cmd->add_option("--out", tr.model_out, "Checkpoint output");
  train_cmd->add_option("--log", tr.log_out, "Epoch log CSV");
  train_cmd->add_option("--epochs", tr.epochs, "Epochs");
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate");
  train_cmd->add_option("--dropout", tr.dropout, "Dropout on input embeddings");
  train_cmd->add_option("--embed", tr.embed, "Embedding size");
  train_cmd->add_option("--hidden", tr.hidden, "GRU hidden size");
  train_cmd->add_option("--seed", tr.seed, "Seed for split, initialization, and shuffling");
  train_cmd->add_option("--min-visits", tr.min_visits, "Drop patients with fewer visits");
  train_cmd->add_option("--cap", tr.cap, "Interaction partners kept per drug");
  train_cmd->add_option("--weights", tr.weights, "Loss weights entropy,hinge,adverse");
  train_cmd->add_option("--activation", tr.activation, "Graph output activation: tanh, sigmoid, identity");
  train_cmd->add_flag("--attention-bias", tr.attention_bias, "Bias terms on the attention projections");
  train_cmd->add_option("--ablate", tr.ablate, "no-medmemory, no-graphs, no-cooccurrence, no-interaction")
      ->check(CLI::IsMember({"no-medmemory", "no-graphs", "no-cooccurrence", "no-interaction"}));
  train_cmd->add_flag("--quiet", tr.quiet, "No per-epoch progress on stderr");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint; prints CSV rows");
  eval->add_option("--model", ev.model, "Checkpoint")->required();
  eval->add_option("--cohort", ev.cohort, "Cohort file the checkpoint was trained on")->required();
  eval->add_option("--split", ev.split, "test, validation, train, or all");
  eval->add_flag("--baseline", ev.baseline, "Add the most-frequent-medications baseline row");
  eval->add_option("--k", ev.k, "Baseline size (default: mean prescription count)");
  eval->add_option("--history", ev.history, "Past medications in memory: recorded or predicted");
  eval->add_option("--threshold", ev.threshold, "Prediction threshold");
  eval->add_option("--csv", ev.csv_out, "Also write the CSV rows here");
  eval->add_option("--report", ev.report_out, "Key-value metrics report");
  eval->add_flag("!--no-header", ev.header, "Omit the CSV header");

  RequestArgs rec;
  auto* recommend = app.add_subcommand("recommend", "Recommend medications for a request");
  recommend->add_option("--model", rec.model, "Checkpoint")->required();
  recommend->add_option("--request", rec.request, "Request JSON file, - for stdin");

  RequestArgs exp;
  auto* explain = app.add_subcommand("explain", "Justifications for a request");
  explain->add_option("--model", exp.model, "Checkpoint")->required();
  explain->add_option("--request", exp.request, "Request JSON file, - for stdin");
  explain->add_option("--medication", exp.medication, "Full breakdown for one medication code");

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "HTTP service: /health, /recommend, /whatif");
  serve->add_option("--model", sv.model, "Checkpoint")->required();
  serve->add_option("--host", sv.host, "Bind address");
  serve->add_option("--port", sv.port, "Port (0 picks a free one)")->envname("PREMIER_PORT");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return run_generate(gen);
    if (train_cmd->parsed()) return run_train(tr);
    if (eval->parsed()) return run_eval(ev);
    if (recommend->parsed()) return run_recommend(rec);
    if (explain->parsed()) return run_explain(exp);
    if (serve->parsed()) return run_serve(sv);
  } catch (const RequestError& e) {
    std::cerr << "premier: invalid request: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "premier: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

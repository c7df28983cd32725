// Command-line front end: dataset generation, training, the three inference
// tasks, evaluation, and checkpoint inspection.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "umate/pipeline.hpp"

namespace {

using namespace umate;

std::uint64_t effective_seed(std::uint64_t fallback) {
  if (const char* env = std::getenv("UMATE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw FormatError("UMATE_SEED must be an unsigned integer");
    }
  }
  return fallback;
}

std::vector<double> parse_vector(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw FormatError("cannot parse number '" + item + "' in vector argument");
    }
  }
  if (out.empty()) throw FormatError("empty vector argument");
  return out;
}

void log_run(const std::string& command, std::uint64_t seed) {
  std::cout << "{\"command\":\"" << command << "\",\"seed\":" << seed
            << ",\"version\":\"umate-1\"}" << std::endl;
}

int cmd_dataset_gen(int topologies, int densities_per, int augment,
                    std::uint64_t seed, const std::string& out,
                    const std::string& filter) {
  seed = effective_seed(seed);
  log_run("dataset gen", seed);
  data::Dataset ds = data::generate_dataset(topologies, densities_per, seed);
  if (augment > 0) ds = data::augment_rotations(ds, augment, derive_seed(seed, 1));
  if (!filter.empty()) ds = data::filter_dataset(ds, filter);
  ds.recompute_norm_stats();
  data::save_dataset(ds, out);
  std::cout << "wrote " << ds.samples.size() << " samples to " << out << std::endl;
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out, const std::string& filter) {
  pipe::Config cfg = config_path.empty() ? pipe::Config{}
                                         : pipe::Config::from_file(config_path);
  cfg.seed = effective_seed(cfg.seed);
  log_run("train", cfg.seed);
  std::cout << cfg.to_json() << std::endl;

  data::Dataset ds = data::load_dataset(data_path);
  if (!filter.empty()) ds = data::filter_dataset(ds, filter);
  data::SplitSpec split_spec;
  split_spec.seed = cfg.seed;
  auto splits = data::split(ds, split_spec);

  Rng rng(cfg.seed);
  pipe::Model model(cfg, rng);
  pipe::warm_up_codebook(model, splits.train, rng);
  auto result = pipe::train(model, splits.train, rng);
  pipe::save_checkpoint(model, out);

  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e)
    std::cout << "epoch " << e << " loss " << result.epoch_losses[e]
              << " d_w " << result.transport_distances[e] << std::endl;
  std::cout << "checkpoint written to " << out << std::endl;
  return 0;
}

int cmd_generate(const std::string& ckpt, double density, const std::string& property_csv,
                 std::uint64_t seed, const std::string& out) {
  seed = effective_seed(seed);
  log_run("generate", seed);
  auto model = pipe::load_checkpoint(ckpt);
  Rng rng(seed);
  auto result = pipe::task_generate(*model, density, parse_vector(property_csv), rng);
  geom::save_topology(result.topology, out);
  std::cout << "nodes " << result.topology.node_count() << " edges "
            << result.topology.edges.size()
            << (result.plan_fallback ? " (plan fallback)" : "") << std::endl;
  std::cout << "wrote " << out << std::endl;
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& topology_path,
                double density, std::uint64_t seed) {
  seed = effective_seed(seed);
  log_run("predict", seed);
  auto model = pipe::load_checkpoint(ckpt);
  Rng rng(seed);
  const auto p = pipe::task_predict(*model, geom::load_topology(topology_path),
                                    density, rng);
  std::cout << "property";
  for (double x : p) std::cout << " " << x;
  std::cout << std::endl;
  return 0;
}

int cmd_confirm(const std::string& ckpt, const std::string& topology_path,
                const std::string& property_csv, std::uint64_t seed) {
  seed = effective_seed(seed);
  log_run("confirm", seed);
  auto model = pipe::load_checkpoint(ckpt);
  Rng rng(seed);
  const double rho = pipe::task_confirm(*model, geom::load_topology(topology_path),
                                        parse_vector(property_csv), rng);
  std::cout << "density " << rho << std::endl;
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path,
             const std::string& report_path, std::uint64_t seed) {
  seed = effective_seed(seed);
  log_run("eval", seed);
  auto model = pipe::load_checkpoint(ckpt);
  data::Dataset ds = data::load_dataset(data_path);
  Rng rng(seed);
  auto report = pipe::evaluate(*model, ds, rng);
  const std::string text = report.to_json();
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw FormatError("cannot open report file " + report_path);
    out << text << std::endl;
  }
  std::cout << text << std::endl;
  return 0;
}

int cmd_inspect(const std::string& ckpt, const std::string& plan_path) {
  auto model = pipe::load_checkpoint(ckpt);
  nlohmann::json j;
  j["config"] = nlohmann::json::parse(model->cfg.to_json());
  j["training_steps"] = model->training_steps;
  j["typical_n"] = model->typical_n;
  j["parameters"] = model->store.size();
  j["has_plan"] = model->has_plan;
  if (model->has_plan) {
    j["plan"] = {{"kappa", model->plan.kappa},
                 {"distance", model->plan.distance},
                 {"iterations", model->plan.iterations},
                 {"converged", model->plan.converged}};
    if (!plan_path.empty()) model->plan.save(plan_path);
  }
  std::cout << j.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unified metamaterial generation pipeline"};
  app.require_subcommand(1);

  // dataset gen
  auto* dataset = app.add_subcommand("dataset", "dataset utilities");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "generate a labelled dataset");
  int topologies = 500, densities_per = 3, augment = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_out = "dataset.jsonl", gen_filter;
  gen->add_option("--topologies", topologies);
  gen->add_option("--densities-per", densities_per);
  gen->add_option("--augment", augment);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", gen_out);
  gen->add_option("--filter", gen_filter);

  // train
  auto* train = app.add_subcommand("train", "train a model");
  std::string train_config, train_data, train_out = "model.ckpt", train_filter;
  train->add_option("--config", train_config);
  train->add_option("--data", train_data)->required();
  train->add_option("--out", train_out);
  train->add_option("--filter", train_filter);

  // generate
  auto* generate = app.add_subcommand("generate", "generate a topology");
  std::string g_ckpt, g_property, g_out = "generated.json";
  double g_density = 0.3;
  std::uint64_t g_seed = 0;
  generate->add_option("--ckpt", g_ckpt)->required();
  generate->add_option("--density", g_density)->required();
  generate->add_option("--property", g_property)->required();
  generate->add_option("--seed", g_seed);
  generate->add_option("--out", g_out);

  // predict
  auto* predict = app.add_subcommand("predict", "predict properties");
  std::string p_ckpt, p_topology;
  double p_density = 0.3;
  std::uint64_t p_seed = 0;
  predict->add_option("--ckpt", p_ckpt)->required();
  predict->add_option("--topology", p_topology)->required();
  predict->add_option("--density", p_density)->required();
  predict->add_option("--seed", p_seed);

  // confirm
  auto* confirm = app.add_subcommand("confirm", "confirm the density condition");
  std::string c_ckpt, c_topology, c_property;
  std::uint64_t c_seed = 0;
  confirm->add_option("--ckpt", c_ckpt)->required();
  confirm->add_option("--topology", c_topology)->required();
  confirm->add_option("--property", c_property)->required();
  confirm->add_option("--seed", c_seed);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string e_ckpt, e_data, e_report;
  std::uint64_t e_seed = 0;
  eval->add_option("--ckpt", e_ckpt)->required();
  eval->add_option("--data", e_data)->required();
  eval->add_option("--report", e_report);
  eval->add_option("--seed", e_seed);

  // inspect
  auto* inspect = app.add_subcommand("inspect", "summarize a checkpoint");
  std::string i_ckpt, i_plan;
  inspect->add_option("--ckpt", i_ckpt)->required();
  inspect->add_option("--plan", i_plan);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_dataset_gen(topologies, densities_per, augment, gen_seed, gen_out,
                             gen_filter);
    if (train->parsed()) return cmd_train(train_config, train_data, train_out, train_filter);
    if (generate->parsed()) return cmd_generate(g_ckpt, g_density, g_property, g_seed, g_out);
    if (predict->parsed()) return cmd_predict(p_ckpt, p_topology, p_density, p_seed);
    if (confirm->parsed()) return cmd_confirm(c_ckpt, c_topology, c_property, c_seed);
    if (eval->parsed()) return cmd_eval(e_ckpt, e_data, e_report, e_seed);
    if (inspect->parsed()) return cmd_inspect(i_ckpt, i_plan);
  } catch (const umate::ContractError& e) {
    std::cerr << "contract violation: " << e.what() << std::endl;
    return 2;
  } catch (const umate::MetricInapplicable& e) {
    std::cerr << "contract violation: " << e.what() << std::endl;
    return 2;
  } catch (const umate::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << std::endl;
    return 3;
  } catch (const umate::FormatError& e) {
    std::cerr << "format error: " << e.what() << std::endl;
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}

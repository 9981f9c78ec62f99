#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "mhcl/checkpoint.hpp"
#include "mhcl/train.hpp"

using namespace mhcl;

namespace {

int cmd_prepare(const std::string& input, const std::string& schema_path,
                const std::string& out_dir, std::uint64_t seed) {
  Schema schema;
  if (!schema_path.empty()) schema = Schema::parse_file(schema_path);
  Ingest ingest = load_tsv(input, schema);
  if (ingest.scale_max - ingest.scale_min + 1 > 10) bucket_scale(ingest);
  RatingDataset ds = split(ingest, seed);
  save_dataset(out_dir, ds);
  std::printf("prepared %zu users, %zu items, %zu/%zu/%zu train/val/test records", ds.num_users,
              ds.num_items, ds.train.size(), ds.val.size(), ds.test.size());
  if (ingest.duplicate_count)
    std::printf(" (%zu duplicate pairs collapsed)", ingest.duplicate_count);
  std::printf("\n");
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_path) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = TrainConfig::from_file(config_path);
  RatingDataset ds = load_dataset(data_dir);
  TrainResult result = train(ds, cfg, [](const EpochLog& log) {
    std::printf("epoch %3zu  loss %.6f  main %.6f  cross %.6f  global %.6f  nrr %.6f  val %.6f%s\n",
                log.epoch, log.loss, log.main, log.cross, log.global, log.nrr, log.val_metric,
                log.improved ? "  *" : "");
    std::fflush(stdout);
  });
  save_checkpoint(out_path, result.best);
  std::printf("best epoch %zu, validation metric %.6f, checkpoint written to %s\n",
              result.best_epoch, result.best.best_metric, out_path.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, std::string task) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  RatingDataset ds = load_dataset(data_dir);
  if (task.empty()) task = ckpt.config.task;
  RatingSubgraphs graphs = build_subgraphs(ds);
  Matrix e = final_embeddings(ckpt.params, graphs, ckpt.config);
  if (task == "completion") {
    MetricsReport rep =
        evaluate_completion(e, ckpt.params.decoder, ds.test, ds.categories, ds.num_users);
    std::printf("test pairs : %zu\nMSE        : %.4f\nMAE        : %.4f\n", rep.count, rep.mse,
                rep.mae);
    std::printf("mse=%.10f\nmae=%.10f\ncount=%zu\n", rep.mse, rep.mae, rep.count);
  } else if (task == "recommendation") {
    MetricsReport rep =
        evaluate_recommendation(e, ds.train, ds.test, ds.num_users, ds.num_items);
    std::printf("test users : %zu\nMRR@10     : %.4f\nNDCG@10    : %.4f\n", rep.count,
                rep.mrr_at_10, rep.ndcg_at_10);
    std::printf("mrr_at_10=%.10f\nndcg_at_10=%.10f\ncount=%zu\n", rep.mrr_at_10, rep.ndcg_at_10,
                rep.count);
  } else {
    fail("config", "unknown task: " + task);
  }
  return 0;
}

int cmd_report_longtail(const std::string& ckpt_path, const std::string& data_dir,
                        const std::string& csv_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  RatingDataset ds = load_dataset(data_dir);
  CohortAssignment cohorts = assign_cohorts(ds);
  RatingSubgraphs graphs = build_subgraphs(ds);
  Matrix e = final_embeddings(ckpt.params, graphs, ckpt.config);
  LongtailReport rep = report_longtail(e, ckpt.params.decoder, ds, cohorts);

  const char* names[3] = {"Inactive", "Normal", "Active"};
  std::printf("cohort     users  test-pairs  MSE\n");
  std::size_t counts[3] = {cohorts.inactive, cohorts.normal, cohorts.active};
  for (int c = 0; c < 3; ++c)
    std::printf("%-9s %6zu  %10zu  %.4f\n", names[c], counts[c], rep.cohort_count[c],
                rep.cohort_mse[c]);
  std::printf("\nrating  test-pairs  MSE\n");
  for (std::size_t r = 0; r < ds.categories.size(); ++r)
    std::printf("%6d  %10zu  %.4f\n", ds.categories[r], rep.rating_count[r], rep.rating_mse[r]);

  if (!csv_path.empty()) {
    std::FILE* f = std::fopen(csv_path.c_str(), "w");
    if (!f) fail("io", "cannot write csv: " + csv_path);
    std::fprintf(f, "group,key,count,mse\n");
    for (int c = 0; c < 3; ++c)
      std::fprintf(f, "cohort,%s,%zu,%.10f\n", names[c], rep.cohort_count[c], rep.cohort_mse[c]);
    for (std::size_t r = 0; r < ds.categories.size(); ++r)
      std::fprintf(f, "rating,%d,%zu,%.10f\n", ds.categories[r], rep.rating_count[r],
                   rep.rating_mse[r]);
    std::fclose(f);
  }
  return 0;
}

int cmd_predict(const std::string& ckpt_path, std::int64_t raw_user, std::int64_t raw_item) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.embeddings.empty())
    fail("format", "checkpoint carries no embeddings; re-train to enable predict");
  std::size_t u = ckpt.user_raw.size(), v = ckpt.item_raw.size();
  for (std::size_t i = 0; i < ckpt.user_raw.size(); ++i)
    if (ckpt.user_raw[i] == raw_user) u = i;
  for (std::size_t i = 0; i < ckpt.item_raw.size(); ++i)
    if (ckpt.item_raw[i] == raw_item) v = i;
  if (u == ckpt.user_raw.size())
    fail("validation", "unknown user id " + std::to_string(raw_user));
  if (v == ckpt.item_raw.size())
    fail("validation", "unknown item id " + std::to_string(raw_item));
  Matrix probs = decode_probs(ckpt.embeddings, ckpt.params.decoder, {{u, v}}, ckpt.num_users);
  const std::vector<int>& cats = ckpt.params.categories;
  std::vector<double> expect = expected_ratings(probs, cats);
  for (std::size_t r = 0; r < cats.size(); ++r)
    std::printf("p(rating=%d)=%.6f\n", cats[r], probs(0, r));
  std::printf("expected_rating=%.6f\n", expect[0]);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-channel hypergraph matrix completion"};
  app.require_subcommand(1);

  std::string input, schema, out_dir, data_dir, config_path, out_ckpt, ckpt, task, csv;
  std::uint64_t seed = 1;
  std::int64_t raw_user = 0, raw_item = 0;

  auto* prepare = app.add_subcommand("prepare", "ingest and split a rating file");
  prepare->add_option("--input", input, "tab-separated rating file")->required();
  prepare->add_option("--schema", schema, "schema descriptor file");
  prepare->add_option("--out", out_dir, "output directory")->required();
  prepare->add_option("--seed", seed, "split seed");

  auto* train_cmd = app.add_subcommand("train", "train on a prepared dataset");
  train_cmd->add_option("--data", data_dir, "prepared dataset directory")->required();
  train_cmd->add_option("--config", config_path, "key=value config file");
  train_cmd->add_option("--out", out_ckpt, "checkpoint output path")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_dir, "prepared dataset directory")->required();
  eval_cmd->add_option("--task", task, "completion | recommendation");

  auto* longtail = app.add_subcommand("report-longtail", "cohort and rating error tables");
  longtail->add_option("--ckpt", ckpt, "checkpoint file")->required();
  longtail->add_option("--data", data_dir, "prepared dataset directory")->required();
  longtail->add_option("--csv", csv, "also write tables as csv");

  auto* predict = app.add_subcommand("predict", "rating distribution for one pair");
  predict->add_option("--ckpt", ckpt, "checkpoint file")->required();
  predict->add_option("--user", raw_user, "raw user id")->required();
  predict->add_option("--item", raw_item, "raw item id")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) return cmd_prepare(input, schema, out_dir, seed);
    if (train_cmd->parsed()) return cmd_train(data_dir, config_path, out_ckpt);
    if (eval_cmd->parsed()) return cmd_eval(ckpt, data_dir, task);
    if (longtail->parsed()) return cmd_report_longtail(ckpt, data_dir, csv);
    if (predict->parsed()) return cmd_predict(ckpt, raw_user, raw_item);
  } catch (const Error& err) {
    std::cerr << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "internal: " << err.what() << "\n";
    return 1;
  }
  return 0;
}

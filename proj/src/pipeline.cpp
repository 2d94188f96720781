#include "dvcr/pipeline.hpp"

#include <ostream>

#include "dvcr/error.hpp"

namespace dvcr {

PatchStatsFeaturizer make_featurizer(const RunConfig& cfg) {
  return PatchStatsFeaturizer(cfg.visual.patch, cfg.visual.d_v);
}

void require_neighbor_source(const Dataset& data, NeighborSource source) {
  if (source != NeighborSource::kTree) return;
  for (const auto& task : data.tasks) {
    for (const auto& step : task.steps) {
      if (!step.document.has_parent_links()) {
        throw ConfigError("neighbor source 'tree' needs parent links, but task '" + task.task_id + "' step " +
                          std::to_string(step.step_id) + " has no parent links");
      }
    }
  }
}

Dataset load_split(const std::filesystem::path& corpus, const RunConfig& cfg) {
  Dataset data = load_dataset(corpus, make_featurizer(cfg));
  require_neighbor_source(data, cfg.neighbor_source);
  return data;
}

namespace {

TextModelShape text_shape(const RunConfig& cfg, std::size_t vocab_size) {
  TextModelShape s;
  s.vocab = vocab_size;
  s.d_model = cfg.ranker.d_model;
  s.layers = cfg.ranker.layers;
  s.heads = cfg.ranker.heads;
  s.ffn = cfg.ranker.ffn;
  s.max_seq = cfg.ranker.max_seq;
  return s;
}

EpochCallback epoch_logger(std::ostream* log, const char* what) {
  if (!log) return {};
  return [log, what](std::size_t epoch, double loss) {
    *log << what << " epoch " << (epoch + 1) << " loss " << loss << "\n";
    log->flush();
  };
}

}  // namespace

ChooserTrainConfig chooser_train_config(const RunConfig& cfg, std::size_t vocab_size) {
  ChooserTrainConfig c;
  c.lr = cfg.chooser_lr;
  c.batch_size = cfg.chooser_batch_size;
  c.epochs = cfg.chooser_epochs;
  c.group_size = cfg.group_size;
  c.positives_per_step = cfg.chooser_positives;
  c.seed = cfg.ranker.seed;
  c.shape = text_shape(cfg, vocab_size);
  return c;
}

OpTrainConfig op_train_config(const RunConfig& cfg, std::size_t vocab_size) {
  OpTrainConfig c;
  c.lr = cfg.chooser_lr;
  c.batch_size = cfg.chooser_batch_size;
  c.epochs = cfg.chooser_epochs;
  c.seed = cfg.ranker.seed;
  c.shape = text_shape(cfg, vocab_size);
  return c;
}

Models train_models(const Dataset& train, const RunConfig& cfg, TrainLog& trace, std::ostream* log,
                    std::optional<RankerWeights> ranker) {
  require_neighbor_source(train, cfg.neighbor_source);
  Models m;
  m.vocab = build_vocab(train.tasks, 1);
  if (ranker) {
    if (ranker->shape.vocab != m.vocab->size()) throw InvariantError("given ranker was trained on another vocabulary");
    m.ranker = std::move(ranker);
  } else if (cfg.ranker_kind == "trained") {
    auto ranker = train_ranker(train, *m.vocab, cfg.ranker, cfg.visual, cfg.neighbor_source, epoch_logger(log, "ranker"));
    trace.ranker_loss = ranker.epoch_loss;
    trace.skipped_steps = ranker.skipped_steps;
    if (log && ranker.skipped_steps > 0) {
      *log << "warning: ranker skipped " << ranker.skipped_steps << " steps without negatives or with a hidden target\n";
    }
    m.ranker = std::move(ranker.weights);
  }
  if (cfg.chooser == "trained") {
    const auto settings = cfg.predictor_settings();
    auto chooser = train_chooser(train, *m.vocab, chooser_train_config(cfg, m.vocab->size()), settings,
                                 epoch_logger(log, "chooser"));
    trace.chooser_loss = chooser.epoch_loss;
    m.chooser = std::move(chooser.weights);
    auto op = train_op_head(train, *m.vocab, op_train_config(cfg, m.vocab->size()), settings,
                            epoch_logger(log, "ophead"));
    trace.op_loss = op.epoch_loss;
    m.op_head = std::move(op.weights);
  }
  return m;
}

void save_models(const Models& m, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  if (m.vocab) m.vocab->save(dir / kVocabFile);
  if (m.ranker) m.ranker->save(dir / kRankerFile);
  if (m.chooser) m.chooser->save(dir / kChooserFile);
  if (m.op_head) m.op_head->save(dir / kOpHeadFile);
}

Models load_models(const std::filesystem::path& dir, const RunConfig& cfg) {
  Models m;
  const bool need_ranker = cfg.ranker_kind == "trained";
  const bool need_chooser = cfg.chooser == "trained";
  const bool need_op = !cfg.op_oracle;
  if (!(need_ranker || need_chooser || need_op)) return m;
  m.vocab = Vocab::load(dir / kVocabFile);
  if (need_ranker) {
    m.ranker = RankerWeights::load(dir / kRankerFile);
    if (m.ranker->shape.vocab != m.vocab->size()) throw FormatError("ranker weights do not match vocab.txt");
    if (m.ranker->shape.d_v != cfg.visual.d_v) {
      throw ConfigError("visual.d_v = " + std::to_string(cfg.visual.d_v) + " but the ranker was trained with " +
                        std::to_string(m.ranker->shape.d_v));
    }
  }
  if (need_chooser) m.chooser = ChooserWeights::load(dir / kChooserFile);
  if (need_op) m.op_head = OpHeadWeights::load(dir / kOpHeadFile);
  return m;
}

std::vector<ScoredElement> oracle_ranking(const Step& step) {
  const HtmlDocument& doc = step.document;
  std::vector<ScoredElement> out{{step.gt_action.element_id, 1.0, 0.0}};
  for (std::size_t i : candidate_indices(doc)) {
    if (doc.elements[i].id != step.gt_action.element_id) out.push_back({doc.elements[i].id, 0.0, 0.0});
  }
  return out;
}

Pipeline::Pipeline(const RunConfig& cfg, const Dataset& data, const Models& models)
    : cfg_(cfg), data_(data), models_(models) {
  if (cfg.ranker_kind == "trained" && !(models.ranker && models.vocab)) throw InvariantError("pipeline needs ranker weights");
  if (cfg.chooser == "trained" && !models.chooser) throw InvariantError("pipeline needs chooser weights");
  if (!cfg.op_oracle && !models.op_head) throw InvariantError("pipeline needs op head weights");
  if (cfg.chooser.rfind("scripted:", 0) == 0 && cfg.chooser != "scripted:gt") {
    script_ = load_chooser_script(cfg.chooser.substr(9));
  }
  require_neighbor_source(data, cfg.neighbor_source);
}

std::vector<ScoredElement> Pipeline::rank(std::size_t t, std::size_t s) const {
  const Task& task = data_.tasks.at(t);
  const Step& step = task.steps.at(s);
  if (cfg_.ranker_kind == "oracle") return oracle_ranking(step);
  const StepView view{step.document, task.instruction, step.history_text, data_.grid(t, s)};
  return rank_elements(view, *models_.ranker, *models_.vocab, models_.ranker->shape.m, step.document.elements.size(),
                       cfg_.neighbor_source, cfg_.neighbor_seed);
}

ActionPrediction Pipeline::predict(std::size_t t, std::size_t s) const {
  const Task& task = data_.tasks.at(t);
  const Step& step = task.steps.at(s);
  const StepView view{step.document, task.instruction, step.history_text, data_.grid(t, s)};

  std::unique_ptr<ElementChooser> chooser;
  if (cfg_.chooser == "trained") {
    chooser = std::make_unique<TrainedChooser>(*models_.chooser, *models_.vocab);
  } else if (cfg_.chooser == "lexical") {
    chooser = std::make_unique<LexicalChooser>();
  } else if (cfg_.chooser == "scripted:gt") {
    chooser = std::make_unique<TargetChooser>(step.gt_action.element_id);
  } else {
    const auto it = script_->find({task.task_id, static_cast<std::size_t>(step.step_id)});
    chooser = std::make_unique<TargetChooser>(it == script_->end() ? std::nullopt
                                                                   : std::optional<std::string>(it->second));
  }
  std::unique_ptr<OperationHead> head;
  if (cfg_.op_oracle) {
    head = std::make_unique<FixedOpHead>(step.gt_action.operation);
  } else {
    head = std::make_unique<LearnedOpHead>(*models_.op_head, *models_.vocab);
  }
  return predict_from_ranking(view, rank(t, s), *chooser, *head, cfg_.predictor_settings());
}

EvalReport evaluate(const RunConfig& cfg, const Dataset& data, const Models& models) {
  const Pipeline pipeline(cfg, data, models);
  return evaluate(data, [&](std::size_t t, std::size_t s) { return pipeline.predict(t, s); });
}

}  // namespace dvcr

#include "aspers/objective/objective.hpp"

#include <cmath>

#include "aspers/error.hpp"
#include "aspers/simd/kernels.hpp"

namespace aspers {
namespace {

// Loss and d(loss)/d(prediction) for one row.
std::pair<double, double> row_loss(double pred, double y, TaskLoss loss) {
  if (loss == TaskLoss::MSE) {
    const double r = pred - y;
    return {r * r, 2.0 * r};
  }
  // Logit-space binary cross-entropy.
  const double l = std::max(pred, 0.0) - pred * y + std::log1p(std::exp(-std::abs(pred)));
  const double p = 1.0 / (1.0 + std::exp(-pred));
  return {l, p - y};
}

void check_targets(std::span<const double> y, TaskLoss loss) {
  if (loss != TaskLoss::BCE) return;
  for (double v : y)
    if (v != 0.0 && v != 1.0)
      throw ContractError("BCE target " + std::to_string(v) + " not in {0,1}");
}

void check_loss(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericError(std::string(term) + " loss is not finite");
}

}  // namespace

TaskLoss loss_for(Task task) {
  return task == Task::Regression ? TaskLoss::MSE : TaskLoss::BCE;
}

void ObjectiveConfig::validate() const {
  if (lambda_p < 0.0 || lambda_s < 0.0 || lambda_d < 0.0)
    throw ConfigError("loss coefficients must be >= 0");
  if (lambda_p == 0.0 && lambda_s == 0.0 && lambda_d == 0.0)
    throw ConfigError("at least one loss coefficient must be > 0");
  if (!(margin > 0.0)) throw ConfigError("margin must be > 0");
}

void ReferenceEncoders::insert(const std::string& user, Mlp encoder) {
  encoders_.insert_or_assign(user, std::move(encoder));
}

const Mlp& ReferenceEncoders::at(const std::string& user) const {
  const auto it = encoders_.find(user);
  if (it == encoders_.end())
    throw ConfigError("no reference encoder for user " + user);
  return it->second;
}

TermResult weighted_task_loss(const PersonalModel& model, const Matrix& x,
                              std::span<const double> y, std::span<const double> coeff,
                              TaskLoss loss, bool encoder_grad) {
  if (x.rows() != y.size() || coeff.size() != y.size())
    throw DimensionError("weighted_task_loss: row count mismatch");
  check_targets(y, loss);
  TermResult result;
  if (encoder_grad) {
    auto enc = forward(model.encoder, x);
    auto out = forward(model.head, enc.output);
    Matrix dout(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto [l, g] = row_loss(out.output(i, 0), y[i], loss);
      result.loss += coeff[i] * l;
      dout(i, 0) = coeff[i] * g;
    }
    NetworkGrad head_grad = backward(model.head, out.tape, dout);
    NetworkGrad enc_grad = backward(model.encoder, enc.tape, head_grad.input);
    result.grads = {std::move(enc_grad), std::move(head_grad)};
  } else {
    const Matrix embedded = predict(model.encoder, x);
    auto out = forward(model.head, embedded);
    Matrix dout(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto [l, g] = row_loss(out.output(i, 0), y[i], loss);
      result.loss += coeff[i] * l;
      dout(i, 0) = coeff[i] * g;
    }
    result.grads = {model.encoder.zero_grad(), backward(model.head, out.tape, dout)};
  }
  check_loss(result.loss, "task");
  return result;
}

TermResult task_loss(const PersonalModel& model, const Matrix& x,
                     std::span<const double> y, TaskLoss loss) {
  if (y.empty()) throw ContractError("task_loss on an empty row set");
  const std::vector<double> coeff(y.size(), 1.0 / static_cast<double>(y.size()));
  return weighted_task_loss(model, x, y, coeff, loss);
}

TermResult transfer_loss(const PersonalModel& model, const TaggedRows& rows,
                         const SupportState& support, TaskLoss loss) {
  if (rows.empty()) return {0.0, zero_grad(model)};
  std::map<std::string, std::size_t> counts;
  for (const auto& j : rows.sources) {
    if (!support.is_similar(j))
      throw ContractError("transfer term received a row from " + j +
                          (support.is_dissimilar(j) ? ", a dissimilar user"
                                                    : ", not a support user"));
    ++counts[j];
  }
  std::vector<double> coeff(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& j = rows.sources[i];
    coeff[i] = support.alpha_of(j) * support.similarity_of(j) /
               static_cast<double>(counts[j]);
  }
  return weighted_task_loss(model, rows.features, rows.targets, coeff, loss);
}

double hinge(double squared_distance, double margin) {
  const double gap = margin - squared_distance;
  return gap > 0.0 ? gap : 0.0;
}

TermResult dissimilar_penalty(const PersonalModel& model, const TaggedRows& rows,
                              const ReferenceEncoders& references,
                              const SupportState& support, double margin) {
  TermResult result{0.0, zero_grad(model)};
  if (rows.empty()) return result;

  std::map<std::string, std::vector<std::size_t>> by_source;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& j = rows.sources[i];
    if (!support.is_dissimilar(j))
      throw ContractError("penalty term received a row from " + j +
                          ", which is not a dissimilar user");
    by_source[j].push_back(i);
  }

  auto enc = forward(model.encoder, rows.features);
  Matrix d_embed(rows.size(), enc.output.cols());
  for (const auto& [j, idx] : by_source) {
    const Mlp& ref = references.at(j);
    if (ref.output_width() != enc.output.cols())
      throw ConfigError("reference encoder for " + j + " has the wrong width");
    const Matrix ref_embed = predict(ref, select_rows(rows.features, idx));
    const double c = support.alpha_of(j) * (1.0 - support.similarity_of(j)) /
                     static_cast<double>(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t i = idx[k];
      const auto eu = enc.output.row(i);
      const auto ej = ref_embed.row(k);
      const double dist = simd::squared_distance(eu, ej);
      const double h = hinge(dist, margin);
      result.loss += c * h;
      if (h > 0.0) {
        auto g = d_embed.row(i);
        for (std::size_t t = 0; t < g.size(); ++t) g[t] = -2.0 * c * (eu[t] - ej[t]);
      }
    }
  }
  check_loss(result.loss, "penalty");
  result.grads.encoder = backward(model.encoder, enc.tape, d_embed);
  return result;
}

ObjectiveResult total_objective(const PersonalModel& model, const Batch& batch,
                                const SupportState& support,
                                const ObjectiveConfig& config,
                                const ReferenceEncoders& references) {
  ObjectiveResult out;
  TermResult personal = task_loss(model, batch.personal.features,
                                  batch.personal.targets, config.loss);
  out.breakdown.personal = personal.loss;
  out.grads = std::move(personal.grads);
  out.grads.scale(config.lambda_p);
  if (!batch.similar.empty()) {
    TermResult t = transfer_loss(model, batch.similar, support, config.loss);
    out.breakdown.transfer = t.loss;
    out.grads.add_scaled(t.grads, config.lambda_s);
  }
  if (!batch.dissimilar.empty()) {
    TermResult p =
        dissimilar_penalty(model, batch.dissimilar, references, support, config.margin);
    out.breakdown.penalty = p.loss;
    out.grads.add_scaled(p.grads, config.lambda_d);
  }
  out.breakdown.total = config.lambda_p * out.breakdown.personal +
                        config.lambda_s * out.breakdown.transfer +
                        config.lambda_d * out.breakdown.penalty;
  return out;
}

double mean_task_loss_value(const PersonalModel& model, const Matrix& x,
                            std::span<const double> y, TaskLoss loss) {
  if (y.empty()) throw ContractError("mean_task_loss_value on an empty row set");
  const Matrix pred = model.predict(x);
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += row_loss(pred(i, 0), y[i], loss).first;
  return total / static_cast<double>(y.size());
}

double mean_hinge_value(const Mlp& encoder, const Mlp& reference, const Matrix& x,
                        double margin) {
  if (x.rows() == 0) throw ContractError("mean_hinge_value on an empty row set");
  const Matrix eu = predict(encoder, x);
  const Matrix ej = predict(reference, x);
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    total += hinge(simd::squared_distance(eu.row(i), ej.row(i)), margin);
  return total / static_cast<double>(x.rows());
}

}  // namespace aspers

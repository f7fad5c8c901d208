#include "synseg/mccl.hpp"

#include <stdexcept>

namespace synseg {

void to_json(nlohmann::ordered_json& j, const LossWeights& w) {
  j = nlohmann::ordered_json{{"lambda1", w.lambda1},
                             {"lambda2", w.lambda2},
                             {"lambda3", w.lambda3},
                             {"lambda4", w.lambda4}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  if (j.contains("lambda1")) w.lambda1 = j.at("lambda1").get<double>();
  if (j.contains("lambda2")) w.lambda2 = j.at("lambda2").get<double>();
  if (j.contains("lambda3")) w.lambda3 = j.at("lambda3").get<double>();
  if (j.contains("lambda4")) w.lambda4 = j.at("lambda4").get<double>();
}

namespace {

void require_nonempty_same(const char* op, size_t a, size_t b) {
  if (a == 0) throw std::invalid_argument(std::string(op) + ": needs at least one category");
  if (a != b) throw std::invalid_argument(std::string(op) + ": feature list sizes differ");
}

// Single-kernel reduction: partial sums never round, so pair counts up to
// N^2 stay well inside the loss tolerance.
Value sum_list(Graph& g, const std::vector<Value>& terms) { return g.add_scalars(terms); }

}  // namespace

Value loss_align(Graph& g, const std::vector<Value>& fg, const std::vector<Value>& text) {
  require_nonempty_same("loss_align", fg.size(), text.size());
  std::vector<Value> terms;
  terms.reserve(fg.size());
  for (size_t i = 0; i < fg.size(); ++i)
    terms.push_back(g.log(g.clipped_cosine(fg[i], text[i])));
  return g.scale(sum_list(g, terms), -1.0 / static_cast<double>(fg.size()));
}

Value loss_cont(Graph& g, const std::vector<Value>& fg, const std::vector<Value>& bg) {
  require_nonempty_same("loss_cont", fg.size(), bg.size());
  std::vector<Value> terms;
  terms.reserve(fg.size());
  for (size_t i = 0; i < fg.size(); ++i)
    terms.push_back(g.log(g.clipped_cosine_complement(fg[i], bg[i])));
  return g.scale(sum_list(g, terms), -1.0 / static_cast<double>(fg.size()));
}

Value loss_back(Graph& g, const std::vector<Value>& bg) {
  require_nonempty_same("loss_back", bg.size(), bg.size());
  std::vector<Value> terms;
  terms.reserve(bg.size() * bg.size());
  for (size_t j = 0; j < bg.size(); ++j)
    for (size_t k = 0; k < bg.size(); ++k)
      terms.push_back(g.log(g.clipped_cosine(bg[j], bg[k])));
  const double n = static_cast<double>(bg.size());
  return g.scale(sum_list(g, terms), -1.0 / (n * n));
}

Value loss_sep(Graph& g, const std::vector<Value>& fg) {
  require_nonempty_same("loss_sep", fg.size(), fg.size());
  std::vector<Value> terms;
  terms.reserve(fg.size() * fg.size());
  for (size_t j = 0; j < fg.size(); ++j)
    for (size_t k = 0; k < fg.size(); ++k)
      terms.push_back(g.log(g.clipped_cosine_complement(fg[j], fg[k])));
  const double n = static_cast<double>(fg.size());
  return g.scale(sum_list(g, terms), -1.0 / (n * n));
}

ImageLossValues image_losses(Graph& g, const std::vector<Value>& fg,
                             const std::vector<Value>& bg, const std::vector<Value>& text,
                             const LossWeights& w) {
  ImageLossValues out;
  out.align = loss_align(g, fg, text);
  out.cont = loss_cont(g, fg, bg);
  out.back = loss_back(g, bg);
  out.sep = loss_sep(g, fg);
  out.total = g.add_scalars({g.scale(out.align, w.lambda1), g.scale(out.cont, w.lambda2),
                             g.scale(out.back, w.lambda3), g.scale(out.sep, w.lambda4)});
  return out;
}

LossReport make_report(const std::vector<PerImageLosses>& images,
                       const std::vector<int>& n_categories, const LossWeights& w) {
  if (images.empty()) throw std::invalid_argument("make_report: empty batch");
  if (images.size() != n_categories.size())
    throw std::invalid_argument("make_report: category count list does not match batch");
  LossReport r;
  r.per_image = images;
  r.n_categories = n_categories;
  for (const auto& li : images) {
    r.align += li.align;
    r.cont += li.cont;
    r.back += li.back;
    r.sep += li.sep;
  }
  const double n = static_cast<double>(images.size());
  r.align /= n;
  r.cont /= n;
  r.back /= n;
  r.sep /= n;
  r.total = w.lambda1 * r.align + w.lambda2 * r.cont + w.lambda3 * r.back + w.lambda4 * r.sep;
  return r;
}

nlohmann::ordered_json LossReport::to_json() const {
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& li : per_image)
    per.push_back({{"align", li.align},
                   {"cont", li.cont},
                   {"back", li.back},
                   {"sep", li.sep},
                   {"total", li.total}});
  return nlohmann::ordered_json{{"align", align}, {"cont", cont},     {"back", back},
                                {"sep", sep},     {"total", total},   {"per_image", per},
                                {"n_categories", n_categories}};
}

}  // namespace synseg

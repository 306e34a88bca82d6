#include "slu/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace slu {

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::pair<Index, Index> storage_dims(const Shape& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
  for (Index d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (shape.size() == 1) return {1, shape[0]};
  Index rows = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
  return {rows, shape.back()};
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape s, bool requires_grad_) : shape(std::move(s)), requires_grad(requires_grad_) {
  auto [rows, cols] = storage_dims(shape);
  value = Matrix<Scalar>::Zero(rows, cols);
}

template <typename Scalar>
void Tensor<Scalar>::zero_grad() {
  if (has_grad()) grad.setZero();
}

template <typename Scalar>
Matrix<Scalar>& Tensor<Scalar>::ensure_grad() {
  if (!has_grad()) grad = Matrix<Scalar>::Zero(value.rows(), value.cols());
  return grad;
}

template <typename Scalar>
Tensor<Scalar>& ParameterStore<Scalar>::add(const std::string& name, Shape shape, bool requires_grad) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::make_unique<Tensor<Scalar>>(std::move(shape), requires_grad));
  return *entries_.back().second;
}

template <typename Scalar>
bool ParameterStore<Scalar>::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

template <typename Scalar>
Tensor<Scalar>& ParameterStore<Scalar>::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *entries_[it->second].second;
}

template <typename Scalar>
const Tensor<Scalar>& ParameterStore<Scalar>::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *entries_[it->second].second;
}

template <typename Scalar>
std::vector<std::string> ParameterStore<Scalar>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

template <typename Scalar>
void ParameterStore<Scalar>::zero_grad() {
  for (auto& e : entries_) e.second->zero_grad();
}

template <typename Scalar>
Index ParameterStore<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.second->size();
  return n;
}

template struct Tensor<float>;
template struct Tensor<double>;
template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace slu

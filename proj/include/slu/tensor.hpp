#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace slu {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Shape = std::vector<Index>;

Index shape_size(const Shape& shape);

// Row-major flattening used for storage: all leading dimensions fold into
// rows, the last dimension is the column count. A rank-1 tensor is 1 x n.
std::pair<Index, Index> storage_dims(const Shape& shape);

std::string shape_string(const Shape& shape);

/// Dense array with an optional gradient buffer of identical shape.
template <typename Scalar>
struct Tensor {
  Shape shape;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;  // empty until a gradient is accumulated
  bool requires_grad = true;

  Tensor() = default;
  explicit Tensor(Shape s, bool requires_grad_ = true);

  Index size() const { return value.size(); }
  bool has_grad() const { return grad.size() != 0; }
  void zero_grad();
  Matrix<Scalar>& ensure_grad();
};

/// Ordered registry of named parameters. Addresses are stable for the lifetime
/// of the store, so graphs may hold raw pointers into it.
template <typename Scalar>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Tensor<Scalar>& add(const std::string& name, Shape shape, bool requires_grad = true);

  bool contains(std::string_view name) const;
  Tensor<Scalar>& at(std::string_view name);
  const Tensor<Scalar>& at(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> names() const;

  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Tensor<Scalar>& tensor(std::size_t i) { return *entries_[i].second; }
  const Tensor<Scalar>& tensor(std::size_t i) const { return *entries_[i].second; }

  void zero_grad();
  Index parameter_count() const;

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Tensor<Scalar>>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace slu

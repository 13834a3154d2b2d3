#include "addmark/lowdim.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "addmark/image_io.hpp"

namespace addmark {
namespace {

void check_dims(const LowDimModel& model, const Eigen::VectorXd& v) {
  if (v.size() != model.ambient_dim())
    throw std::invalid_argument("vector length " + std::to_string(v.size()) +
                                " does not match ambient dimension " +
                                std::to_string(model.ambient_dim()));
}

ImageTensor matrix_to_tensor(const Eigen::MatrixXd& m) {
  ImageTensor t({1, static_cast<int>(m.rows()), static_cast<int>(m.cols())},
                ValueRange::unbounded);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.at(0, static_cast<int>(r), static_cast<int>(c)) = m(r, c);
  return t;
}

Eigen::MatrixXd tensor_to_matrix(const ImageTensor& t) {
  Eigen::MatrixXd m(t.height(), t.width());
  for (int r = 0; r < t.height(); ++r)
    for (int c = 0; c < t.width(); ++c) m(r, c) = t.at(0, r, c);
  return m;
}

}  // namespace

LowDimModel::LowDimModel(Eigen::MatrixXd basis, Eigen::MatrixXd sigma_z, double sigma_eps)
    : basis_(std::move(basis)), sigma_z_(std::move(sigma_z)), sigma_eps_(sigma_eps) {
  const auto D = basis_.rows();
  const auto d = basis_.cols();
  if (d < 1 || d >= D) throw std::invalid_argument("latent dimension must satisfy 1 <= d < D");
  if (sigma_z_.rows() != d || sigma_z_.cols() != d)
    throw std::invalid_argument("Sigma_Z must be d x d");
  if (!(sigma_eps_ >= 0.0)) throw std::invalid_argument("sigma_eps must be nonnegative");

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(basis_);
  const auto& s = svd.singularValues();
  if (!(s(d - 1) > 1e-8 * s(0))) throw std::invalid_argument("B must have full column rank");

  if ((sigma_z_ - sigma_z_.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, sigma_z_.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("Sigma_Z must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_z_);
  if (!(eig.eigenvalues().minCoeff() > 0.0))
    throw std::invalid_argument("Sigma_Z must be positive definite");
  chol_ = Eigen::LLT<Eigen::MatrixXd>(sigma_z_).matrixL();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis_);
  q_ = qr.householderQ() * Eigen::MatrixXd::Identity(D, d);
}

LowDimModel LowDimModel::random(int ambient_dim, int latent_dim, double latent_variance,
                                double sigma_eps, SeededRng& rng) {
  Eigen::MatrixXd g(ambient_dim, latent_dim);
  for (int c = 0; c < latent_dim; ++c)
    for (int r = 0; r < ambient_dim; ++r) g(r, c) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd b = qr.householderQ() * Eigen::MatrixXd::Identity(ambient_dim, latent_dim);
  Eigen::MatrixXd sz = latent_variance * Eigen::MatrixXd::Identity(latent_dim, latent_dim);
  return LowDimModel(std::move(b), std::move(sz), sigma_eps);
}

Eigen::VectorXd LowDimModel::project_onto_U(const Eigen::VectorXd& v) const {
  check_dims(*this, v);
  return q_ * (q_.transpose() * v);
}

Eigen::VectorXd LowDimModel::project_onto_U_perp(const Eigen::VectorXd& v) const {
  return v - project_onto_U(v);
}

Eigen::MatrixXd LowDimModel::covariance() const {
  Eigen::MatrixXd cov = basis_ * sigma_z_ * basis_.transpose();
  cov.diagonal().array() += sigma_eps_ * sigma_eps_;
  return cov;
}

double LowDimModel::covariance_trace() const {
  return (basis_.transpose() * basis_ * sigma_z_).trace() +
         ambient_dim() * sigma_eps_ * sigma_eps_;
}

Eigen::VectorXd LowDimModel::draw(SeededRng& rng) const {
  Eigen::VectorXd z(latent_dim());
  for (auto& v : z) v = rng.normal();
  Eigen::VectorXd x = basis_ * (chol_ * z);
  for (auto& v : x) v += sigma_eps_ * rng.normal();
  return x;
}

std::vector<ModelSample> sample(const LowDimModel& model, std::size_t n, SeededRng& rng) {
  if (n == 0) throw std::invalid_argument("sample count must be at least 1");
  const auto& chol = model.latent_cholesky();
  std::vector<ModelSample> out(n);
  for (auto& s : out) {
    Eigen::VectorXd u(model.latent_dim());
    for (auto& v : u) v = rng.normal();
    s.z = chol * u;
    s.eps.resize(model.ambient_dim());
    for (auto& v : s.eps) v = model.sigma_eps() * rng.normal();
    s.x = model.basis() * s.z + s.eps;
  }
  return out;
}

Eigen::MatrixXd sample_matrix(const LowDimModel& model, std::size_t n, SeededRng& rng) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), model.ambient_dim());
  for (std::size_t i = 0; i < n; ++i) x.row(static_cast<Eigen::Index>(i)) = model.draw(rng);
  return x;
}

Eigen::MatrixXd covariance_sigma_x(const LowDimModel& model) { return model.covariance(); }

void save_model(const std::filesystem::path& json_path, const LowDimModel& model) {
  auto basis_path = json_path;
  basis_path.replace_extension(".basis.addt");
  auto sz_path = json_path;
  sz_path.replace_extension(".sigma_z.addt");
  write_raw_tensor(basis_path, matrix_to_tensor(model.basis()));
  write_raw_tensor(sz_path, matrix_to_tensor(model.sigma_z()));
  nlohmann::json j{{"D", model.ambient_dim()},
                   {"d", model.latent_dim()},
                   {"sigma_eps", model.sigma_eps()},
                   {"basis", basis_path.filename().string()},
                   {"sigma_z", sz_path.filename().string()}};
  std::ofstream out(json_path);
  if (!out) throw std::runtime_error("cannot write " + json_path.string());
  out << j.dump(2) << '\n';
}

LowDimModel load_model(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open " + json_path.string());
  const auto j = nlohmann::json::parse(in);
  const auto dir = json_path.parent_path();
  Eigen::MatrixXd b = tensor_to_matrix(read_raw_tensor(dir / j.at("basis").get<std::string>()));
  Eigen::MatrixXd sz =
      tensor_to_matrix(read_raw_tensor(dir / j.at("sigma_z").get<std::string>()));
  if (b.rows() != j.at("D").get<int>() || b.cols() != j.at("d").get<int>())
    throw std::runtime_error("model sidecar dimensions disagree with the basis tensor");
  return LowDimModel(std::move(b), std::move(sz), j.at("sigma_eps").get<double>());
}

}  // namespace addmark

#include "mhcl/tape.hpp"

#include <cmath>

namespace mhcl {

namespace {

// C += A * B
void matmul_acc(Matrix& c, const Matrix& a, const Matrix& b) {
  const std::size_t n = a.cols, p = b.cols;
  parallel_rows(a.rows, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double* arow = a.row(i);
      double* crow = c.row(i);
      for (std::size_t k = 0; k < n; ++k) {
        const double aik = arow[k];
        if (aik == 0.0) continue;
        const double* brow = b.row(k);
        for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
      }
    }
  });
}

// C += A * B^T
void matmul_nt_acc(Matrix& c, const Matrix& a, const Matrix& b) {
  const std::size_t n = a.cols;
  parallel_rows(a.rows, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double* arow = a.row(i);
      double* crow = c.row(i);
      for (std::size_t j = 0; j < b.rows; ++j) {
        const double* brow = b.row(j);
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += arow[k] * brow[k];
        crow[j] += s;
      }
    }
  });
}

// C += A^T * B
void matmul_tn_acc(Matrix& c, const Matrix& a, const Matrix& b) {
  const std::size_t p = b.cols;
  parallel_rows(a.cols, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double* crow = c.row(i);
      for (std::size_t k = 0; k < a.rows; ++k) {
        const double aki = a(k, i);
        if (aki == 0.0) continue;
        const double* brow = b.row(k);
        for (std::size_t j = 0; j < p; ++j) crow[j] += aki * brow[j];
      }
    }
  });
}

void check_finite_guard(const Matrix&) {
  // Hot path: finiteness is asserted by tests and the training loop's NaN
  // watchdog, not per-op.
}

}  // namespace

int Tape::push(Matrix value, std::function<void(Tape&, int)> backprop) {
  check_finite_guard(value);
  nodes_.push_back(Node{std::move(value), std::move(backprop)});
  return static_cast<int>(nodes_.size()) - 1;
}

Matrix& Tape::grad_buf(int id) {
  Matrix& g = grads_[id];
  if (g.empty() && nodes_[id].value.numel() > 0)
    g = Matrix::zeros(nodes_[id].value.rows, nodes_[id].value.cols);
  return g;
}

const Matrix& Tape::checked(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    fail("contract", "invalid Var handle");
  return nodes_[v.id].value;
}

const Matrix& Tape::value(Var v) const { return checked(v); }

const Matrix& Tape::grad(Var v) {
  checked(v);
  if (grads_.size() != nodes_.size()) fail("contract", "grad() before backward()");
  return grad_buf(v.id);
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
}

void Tape::backward(Var loss) {
  const Matrix& lv = checked(loss);
  if (lv.numel() != 1) fail("contract", "backward() requires a scalar loss node");
  grads_.assign(nodes_.size(), Matrix{});
  grad_buf(loss.id).data[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    if (grads_[i].empty()) continue;  // node not on any path to the loss
    if (nodes_[i].backprop) nodes_[i].backprop(*this, i);
  }
}

Var Tape::leaf(Matrix value) { return Var{push(std::move(value), nullptr)}; }

Var Tape::matmul(Var a, Var b) {
  const Matrix& av = checked(a);
  const Matrix& bv = checked(b);
  if (av.cols != bv.rows) fail("shape", "matmul inner dimensions disagree");
  Matrix out(av.rows, bv.cols);
  matmul_acc(out, av, bv);
  int pa = a.id, pb = b.id;
  return Var{push(std::move(out), [pa, pb](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    matmul_nt_acc(t.grad_buf(pa), g, t.nodes_[pb].value);
    matmul_tn_acc(t.grad_buf(pb), t.nodes_[pa].value, g);
  })};
}

Var Tape::add(Var a, Var b) {
  const Matrix& av = checked(a);
  const Matrix& bv = checked(b);
  if (!av.same_shape(bv)) fail("shape", "add operand shapes disagree");
  Matrix out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
  int pa = a.id, pb = b.id;
  return Var{push(std::move(out), [pa, pb](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    Matrix& ga = t.grad_buf(pa);
    Matrix& gb = t.grad_buf(pb);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] += g.data[i];
    }
  })};
}

Var Tape::sub(Var a, Var b) {
  const Matrix& av = checked(a);
  const Matrix& bv = checked(b);
  if (!av.same_shape(bv)) fail("shape", "sub operand shapes disagree");
  Matrix out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= bv.data[i];
  int pa = a.id, pb = b.id;
  return Var{push(std::move(out), [pa, pb](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    Matrix& ga = t.grad_buf(pa);
    Matrix& gb = t.grad_buf(pb);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] -= g.data[i];
    }
  })};
}

Var Tape::mul(Var a, Var b) {
  const Matrix& av = checked(a);
  const Matrix& bv = checked(b);
  if (!av.same_shape(bv)) fail("shape", "mul operand shapes disagree");
  Matrix out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
  int pa = a.id, pb = b.id;
  return Var{push(std::move(out), [pa, pb](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    const Matrix& av2 = t.nodes_[pa].value;
    const Matrix& bv2 = t.nodes_[pb].value;
    Matrix& ga = t.grad_buf(pa);
    Matrix& gb = t.grad_buf(pb);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += g.data[i] * bv2.data[i];
      gb.data[i] += g.data[i] * av2.data[i];
    }
  })};
}

Var Tape::scalar_mul(Var a, double c) {
  Matrix out = checked(a);
  for (auto& x : out.data) x *= c;
  int pa = a.id;
  return Var{push(std::move(out), [pa, c](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += c * g.data[i];
  })};
}

Var Tape::add_const(Var a, double c) {
  Matrix out = checked(a);
  for (auto& x : out.data) x += c;
  int pa = a.id;
  return Var{push(std::move(out), [pa](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
  })};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) fail("contract", "concat_cols of zero parts");
  std::size_t rows = checked(parts[0]).rows, cols = 0;
  for (Var p : parts) {
    if (checked(p).rows != rows) fail("shape", "concat_cols row counts disagree");
    cols += checked(p).cols;
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  for (Var p : parts) {
    const Matrix& pv = checked(p);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pv.cols; ++j) out(i, off + j) = pv(i, j);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += pv.cols;
  }
  return Var{push(std::move(out), [ids, offsets](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Matrix& gp = t.grad_buf(ids[k]);
      for (std::size_t i = 0; i < gp.rows; ++i)
        for (std::size_t j = 0; j < gp.cols; ++j) gp(i, j) += g(i, offsets[k] + j);
    }
  })};
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) fail("contract", "concat_rows of zero parts");
  std::size_t cols = checked(parts[0]).cols, rows = 0;
  for (Var p : parts) {
    if (checked(p).cols != cols) fail("shape", "concat_rows column counts disagree");
    rows += checked(p).rows;
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  for (Var p : parts) {
    const Matrix& pv = checked(p);
    for (std::size_t i = 0; i < pv.rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out(off + i, j) = pv(i, j);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += pv.rows;
  }
  return Var{push(std::move(out), [ids, offsets](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Matrix& gp = t.grad_buf(ids[k]);
      for (std::size_t i = 0; i < gp.rows; ++i)
        for (std::size_t j = 0; j < gp.cols; ++j) gp(i, j) += g(offsets[k] + i, j);
    }
  })};
}

Var Tape::slice_rows(Var a, std::size_t start, std::size_t count) {
  const Matrix& av = checked(a);
  if (start + count > av.rows) fail("shape", "slice_rows out of range");
  Matrix out(count, av.cols);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < av.cols; ++j) out(i, j) = av(start + i, j);
  int pa = a.id;
  return Var{push(std::move(out), [pa, start](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ga(start + i, j) += g(i, j);
  })};
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t count) {
  const Matrix& av = checked(a);
  if (start + count > av.cols) fail("shape", "slice_cols out of range");
  Matrix out(av.rows, count);
  for (std::size_t i = 0; i < av.rows; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, start + j);
  int pa = a.id;
  return Var{push(std::move(out), [pa, start](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ga(i, start + j) += g(i, j);
  })};
}

Var Tape::reduce_sum(Var a) {
  const Matrix& av = checked(a);
  double s = 0.0;
  for (double x : av.data) s += x;
  int pa = a.id;
  return Var{push(Matrix::scalar(s), [pa](Tape& t, int id) {
    const double g = t.grads_[id].data[0];
    Matrix& ga = t.grad_buf(pa);
    for (auto& x : ga.data) x += g;
  })};
}

Var Tape::frobenius_sq(Var a) {
  const Matrix& av = checked(a);
  double s = 0.0;
  for (double x : av.data) s += x * x;
  int pa = a.id;
  return Var{push(Matrix::scalar(s), [pa](Tape& t, int id) {
    const double g = t.grads_[id].data[0];
    const Matrix& av2 = t.nodes_[pa].value;
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] += 2.0 * g * av2.data[i];
  })};
}

Var Tape::log(Var a) {
  const Matrix& av = checked(a);
  Matrix out = av;
  for (auto& x : out.data) {
    if (x <= 0.0) fail("domain", "log of non-positive entry");
    x = std::log(x);
  }
  int pa = a.id;
  return Var{push(std::move(out), [pa](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    const Matrix& av2 = t.nodes_[pa].value;
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] / av2.data[i];
  })};
}

Var Tape::log_clamped(Var a, double floor) {
  const Matrix& av = checked(a);
  Matrix out = av;
  for (auto& x : out.data) x = std::log(x < floor ? floor : x);
  int pa = a.id;
  return Var{push(std::move(out), [pa, floor](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    const Matrix& av2 = t.nodes_[pa].value;
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      double x = av2.data[i];
      ga.data[i] += g.data[i] / (x < floor ? floor : x);
    }
  })};
}

Var Tape::exp(Var a) {
  Matrix out = checked(a);
  for (auto& x : out.data) x = std::exp(x);
  int pa = a.id;
  return Var{push(std::move(out), [pa](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    const Matrix& v = t.nodes_[id].value;
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * v.data[i];
  })};
}

Var Tape::tanh(Var a) {
  Matrix out = checked(a);
  for (auto& x : out.data) x = std::tanh(x);
  int pa = a.id;
  return Var{push(std::move(out), [pa](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    const Matrix& v = t.nodes_[id].value;
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i)
      ga.data[i] += g.data[i] * (1.0 - v.data[i] * v.data[i]);
  })};
}

Var Tape::softplus(Var a) {
  Matrix out = checked(a);
  for (auto& x : out.data) {
    const double z = x;
    x = (z > 0.0 ? z : 0.0) + std::log1p(std::exp(-std::fabs(z)));
  }
  int pa = a.id;
  return Var{push(std::move(out), [pa](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    const Matrix& av2 = t.nodes_[pa].value;
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double z = av2.data[i];
      const double sig = 1.0 / (1.0 + std::exp(-z));
      ga.data[i] += g.data[i] * sig;
    }
  })};
}

Var Tape::leaky_relu(Var a, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) fail("contract", "leaky_relu slope must be in (0,1)");
  Matrix out = checked(a);
  for (auto& x : out.data) x = x >= 0.0 ? x : slope * x;
  int pa = a.id;
  return Var{push(std::move(out), [pa, slope](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    const Matrix& av2 = t.nodes_[pa].value;
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i)
      ga.data[i] += g.data[i] * (av2.data[i] >= 0.0 ? 1.0 : slope);
  })};
}

Var Tape::rowwise_softmax(Var a, double temperature) {
  if (!(temperature > 0.0)) fail("contract", "softmax temperature must be positive");
  const Matrix& av = checked(a);
  Matrix out(av.rows, av.cols);
  for (std::size_t i = 0; i < av.rows; ++i) {
    const double* x = av.row(i);
    double* y = out.row(i);
    double mx = x[0];
    for (std::size_t j = 1; j < av.cols; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < av.cols; ++j) {
      y[j] = std::exp((x[j] - mx) / temperature);
      s += y[j];
    }
    for (std::size_t j = 0; j < av.cols; ++j) y[j] /= s;
  }
  int pa = a.id;
  return Var{push(std::move(out), [pa, temperature](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    const Matrix& y = t.nodes_[id].value;
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols; ++j)
        ga(i, j) += y(i, j) * (g(i, j) - dot) / temperature;
    }
  })};
}

Var Tape::l2_normalize_rows(Var a) {
  const Matrix& av = checked(a);
  Matrix out(av.rows, av.cols);
  auto norms = std::make_shared<std::vector<double>>(av.rows);
  for (std::size_t i = 0; i < av.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < av.cols; ++j) s += av(i, j) * av(i, j);
    double n = std::sqrt(s);
    if (n < 1e-12) n = 1e-12;
    (*norms)[i] = n;
    for (std::size_t j = 0; j < av.cols; ++j) out(i, j) = av(i, j) / n;
  }
  int pa = a.id;
  return Var{push(std::move(out), [pa, norms](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    const Matrix& y = t.nodes_[id].value;
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols; ++j) dot += g(i, j) * y(i, j);
      const double inv = 1.0 / (*norms)[i];
      for (std::size_t j = 0; j < g.cols; ++j)
        ga(i, j) += (g(i, j) - y(i, j) * dot) * inv;
    }
  })};
}

Var Tape::transpose(Var a) {
  Matrix out = mhcl::transpose(checked(a));
  int pa = a.id;
  return Var{push(std::move(out), [pa](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ga(j, i) += g(i, j);
  })};
}

Var Tape::col_sum(Var a) {
  const Matrix& av = checked(a);
  Matrix out(1, av.cols);
  for (std::size_t i = 0; i < av.rows; ++i)
    for (std::size_t j = 0; j < av.cols; ++j) out(0, j) += av(i, j);
  int pa = a.id;
  return Var{push(std::move(out), [pa](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < ga.rows; ++i)
      for (std::size_t j = 0; j < ga.cols; ++j) ga(i, j) += g(0, j);
  })};
}

Var Tape::row_scale(Var a, Var s) {
  const Matrix& av = checked(a);
  const Matrix& sv = checked(s);
  if (sv.numel() != av.rows) fail("shape", "row_scale needs one scale per row");
  Matrix out = av;
  for (std::size_t i = 0; i < av.rows; ++i)
    for (std::size_t j = 0; j < av.cols; ++j) out(i, j) *= sv.data[i];
  int pa = a.id, ps = s.id;
  return Var{push(std::move(out), [pa, ps](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    const Matrix& av2 = t.nodes_[pa].value;
    const Matrix& sv2 = t.nodes_[ps].value;
    Matrix& ga = t.grad_buf(pa);
    Matrix& gs = t.grad_buf(ps);
    for (std::size_t i = 0; i < g.rows; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < g.cols; ++j) {
        ga(i, j) += g(i, j) * sv2.data[i];
        acc += g(i, j) * av2(i, j);
      }
      gs.data[i] += acc;
    }
  })};
}

Var Tape::recip(Var a, double floor) {
  const Matrix& av = checked(a);
  Matrix out = av;
  for (auto& x : out.data) x = 1.0 / (x < floor ? floor : x);
  int pa = a.id;
  return Var{push(std::move(out), [pa, floor](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    const Matrix& av2 = t.nodes_[pa].value;
    const Matrix& v = t.nodes_[id].value;
    Matrix& ga = t.grad_buf(pa);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (av2.data[i] > floor) ga.data[i] -= g.data[i] * v.data[i] * v.data[i];
  })};
}

Var Tape::row_dot(Var a, Var b) {
  const Matrix& av = checked(a);
  const Matrix& bv = checked(b);
  if (!av.same_shape(bv)) fail("shape", "row_dot operand shapes disagree");
  Matrix out(av.rows, 1);
  for (std::size_t i = 0; i < av.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < av.cols; ++j) s += av(i, j) * bv(i, j);
    out(i, 0) = s;
  }
  int pa = a.id, pb = b.id;
  return Var{push(std::move(out), [pa, pb](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    const Matrix& av2 = t.nodes_[pa].value;
    const Matrix& bv2 = t.nodes_[pb].value;
    Matrix& ga = t.grad_buf(pa);
    Matrix& gb = t.grad_buf(pb);
    for (std::size_t i = 0; i < av2.rows; ++i) {
      const double gi = g(i, 0);
      for (std::size_t j = 0; j < av2.cols; ++j) {
        ga(i, j) += gi * bv2(i, j);
        gb(i, j) += gi * av2(i, j);
      }
    }
  })};
}

Var Tape::gather_rows(Var a, std::shared_ptr<const std::vector<std::size_t>> idx) {
  const Matrix& av = checked(a);
  Matrix out(idx->size(), av.cols);
  for (std::size_t i = 0; i < idx->size(); ++i) {
    const std::size_t r = (*idx)[i];
    if (r >= av.rows) fail("shape", "gather_rows index out of range");
    for (std::size_t j = 0; j < av.cols; ++j) out(i, j) = av(r, j);
  }
  int pa = a.id;
  return Var{push(std::move(out), [pa, idx](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    Matrix& ga = t.grad_buf(pa);
    // Ascending scatter-add keeps accumulation order fixed.
    for (std::size_t i = 0; i < idx->size(); ++i) {
      const std::size_t r = (*idx)[i];
      for (std::size_t j = 0; j < g.cols; ++j) ga(r, j) += g(i, j);
    }
  })};
}

Var Tape::spmm(std::shared_ptr<const SparseMatrix> s, Var x, bool symmetric) {
  const Matrix& xv = checked(x);
  if (s->cols != xv.rows) fail("shape", "spmm inner dimensions disagree");
  Matrix out = s->mul(xv);
  std::shared_ptr<const SparseMatrix> st = s;
  if (!symmetric) {
    std::vector<std::size_t> r, c;
    std::vector<double> v;
    for (std::size_t i = 0; i < s->rows; ++i)
      for (std::size_t k = s->rowptr[i]; k < s->rowptr[i + 1]; ++k) {
        r.push_back(s->colidx[k]);
        c.push_back(i);
        v.push_back(s->values[k]);
      }
    st = std::make_shared<SparseMatrix>(SparseMatrix::from_triplets(s->cols, s->rows, r, c, v));
  }
  int px = x.id;
  return Var{push(std::move(out), [px, st](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    Matrix gx = st->mul(g);
    Matrix& ga = t.grad_buf(px);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] += gx.data[i];
  })};
}

Var Tape::infonce(Var x, Var y, double temperature) {
  if (!(temperature > 0.0)) fail("contract", "infonce temperature must be positive");
  const Matrix& xv = checked(x);
  const Matrix& yv = checked(y);
  if (!xv.same_shape(yv)) fail("shape", "infonce view shapes disagree");
  const std::size_t n = xv.rows;
  if (n < 2) {
    // Denominator is undefined with a single anchor; contributes nothing.
    return Var{push(Matrix::scalar(0.0), [](Tape&, int) {})};
  }
  // S = X Y^T, scaled by 1/temperature.
  Matrix s(n, n);
  matmul_nt_acc(s, xv, yv);
  const double inv_tau = 1.0 / temperature;
  // Off-diagonal softmax probabilities, kept for the backward pass.
  auto probs = std::make_shared<Matrix>(n, n);
  double loss = 0.0;
  for (std::size_t u = 0; u < n; ++u) {
    const double* srow = s.row(u);
    double mx = -1e300;
    for (std::size_t v = 0; v < n; ++v)
      if (v != u) mx = std::max(mx, srow[v] * inv_tau);
    double denom = 0.0;
    double* prow = probs->row(u);
    for (std::size_t v = 0; v < n; ++v) {
      if (v == u) continue;
      prow[v] = std::exp(srow[v] * inv_tau - mx);
      denom += prow[v];
    }
    for (std::size_t v = 0; v < n; ++v)
      if (v != u) prow[v] /= denom;
    loss += -srow[u] * inv_tau + std::log(denom) + mx;
  }
  loss /= static_cast<double>(n);
  int px = x.id, py = y.id;
  return Var{push(Matrix::scalar(loss), [px, py, probs, inv_tau, n](Tape& t, int id) {
    const double g = t.grads_[id].data[0];
    const Matrix& xv2 = t.nodes_[px].value;
    const Matrix& yv2 = t.nodes_[py].value;
    const double c = g * inv_tau / static_cast<double>(n);
    // dX = c (P Y - Y), dY = c (P^T X - X); P has zero diagonal.
    Matrix py_m(n, yv2.cols);
    matmul_acc(py_m, *probs, yv2);
    Matrix ptx(n, xv2.cols);
    matmul_tn_acc(ptx, *probs, xv2);
    Matrix& gx = t.grad_buf(px);
    Matrix& gy = t.grad_buf(py);
    for (std::size_t i = 0; i < gx.numel(); ++i) {
      gx.data[i] += c * (py_m.data[i] - yv2.data[i]);
      gy.data[i] += c * (ptx.data[i] - xv2.data[i]);
    }
  })};
}

Var Tape::bilinear_logits(Var e, const std::vector<Var>& q,
                          std::shared_ptr<const std::vector<Pair>> pairs,
                          std::size_t num_users) {
  const Matrix& ev = checked(e);
  const std::size_t d = ev.cols;
  const std::size_t num_items = ev.rows - num_users;
  const std::size_t nr = q.size();
  std::vector<int> qids;
  for (Var qr : q) {
    const Matrix& qv = checked(qr);
    if (qv.rows != d || qv.cols != d) fail("shape", "decoder matrix must be d x d");
    qids.push_back(qr.id);
  }
  Matrix out(pairs->size(), nr);
  {
    Matrix items(num_items, d);
    for (std::size_t v = 0; v < num_items; ++v)
      for (std::size_t j = 0; j < d; ++j) items(v, j) = ev(num_users + v, j);
    for (std::size_t r = 0; r < nr; ++r) {
      // it = items * Q_r^T, i.e. it[v] = Q_r e_v.
      Matrix it(num_items, d);
      matmul_nt_acc(it, items, nodes_[qids[r]].value);
      for (std::size_t p = 0; p < pairs->size(); ++p) {
        const Pair& pr = (*pairs)[p];
        const double* urow = ev.row(pr.user);
        const double* vrow = it.row(pr.item);
        double sum = 0.0;
        for (std::size_t j = 0; j < d; ++j) sum += urow[j] * vrow[j];
        out(p, r) = sum;
      }
    }
  }
  int pe = e.id;
  return Var{push(std::move(out), [pe, qids, pairs, num_users](Tape& t, int id) {
    const Matrix& g = t.grads_[id];
    const Matrix& ev2 = t.nodes_[pe].value;
    const std::size_t d = ev2.cols;
    const std::size_t num_items = ev2.rows - num_users;
    Matrix& ge = t.grad_buf(pe);
    Matrix users(num_users, d), items(num_items, d);
    for (std::size_t u = 0; u < num_users; ++u)
      for (std::size_t j = 0; j < d; ++j) users(u, j) = ev2(u, j);
    for (std::size_t v = 0; v < num_items; ++v)
      for (std::size_t j = 0; j < d; ++j) items(v, j) = ev2(num_users + v, j);
    for (std::size_t r = 0; r < qids.size(); ++r) {
      const Matrix& qv = t.nodes_[qids[r]].value;
      Matrix it(num_items, d);   // Q_r e_v per item
      matmul_nt_acc(it, items, qv);
      Matrix ut(num_users, d);   // e_u^T Q_r per user
      matmul_acc(ut, users, qv);
      // su[u] = sum over pairs with user u of g[p][r] * e_v  (for dQ_r)
      Matrix su(num_users, d);
      for (std::size_t p = 0; p < pairs->size(); ++p) {
        const Pair& pr = (*pairs)[p];
        const double gpr = g(p, r);
        if (gpr == 0.0) continue;
        const double* itr = it.row(pr.item);
        const double* utr = ut.row(pr.user);
        const double* vrow = items.row(pr.item);
        double* geu = ge.row(pr.user);
        double* gev = ge.row(num_users + pr.item);
        double* sur = su.row(pr.user);
        for (std::size_t j = 0; j < d; ++j) {
          geu[j] += gpr * itr[j];
          gev[j] += gpr * utr[j];
          sur[j] += gpr * vrow[j];
        }
      }
      matmul_tn_acc(t.grad_buf(qids[r]), users, su);  // dQ_r += U^T S
    }
  })};
}

}  // namespace mhcl

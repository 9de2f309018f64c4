#include "las/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "las/errors.hpp"

namespace las {

Graph::NodeId Graph::push(Tensor value, std::function<void(Graph&, NodeId)> back) {
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::constant(Tensor t) { return push(std::move(t), nullptr); }

Graph::NodeId Graph::param(const std::string& name, const Tensor& value) {
  if (params_.count(name)) throw std::invalid_argument("graph: parameter registered twice: " + name);
  NodeId id = push(value, nullptr);
  params_.emplace(name, id);
  return id;
}

const Tensor& Graph::grad(const std::string& param_name) const {
  auto it = params_.find(param_name);
  if (it == params_.end()) throw std::invalid_argument("graph: unknown parameter " + param_name);
  return nodes_[static_cast<std::size_t>(it->second)].grad;
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  return push(las::add(value(a), value(b)), [a, b](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    Tensor& ga = g.grad_mut(a);
    Tensor& gb = g.grad_mut(b);
    for (std::size_t i = 0; i < go.v.size(); ++i) {
      ga.v[i] += go.v[i];
      gb.v[i] += go.v[i];
    }
  });
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
  return push(las::sub(value(a), value(b)), [a, b](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    Tensor& ga = g.grad_mut(a);
    Tensor& gb = g.grad_mut(b);
    for (std::size_t i = 0; i < go.v.size(); ++i) {
      ga.v[i] += go.v[i];
      gb.v[i] -= go.v[i];
    }
  });
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
  return push(las::mul(value(a), value(b)), [a, b](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    const Tensor& va = g.value(a);
    const Tensor& vb = g.value(b);
    Tensor& ga = g.grad_mut(a);
    Tensor& gb = g.grad_mut(b);
    for (std::size_t i = 0; i < go.v.size(); ++i) {
      ga.v[i] += go.v[i] * vb.v[i];
      gb.v[i] += go.v[i] * va.v[i];
    }
  });
}

Graph::NodeId Graph::scale(NodeId a, double c) {
  return push(las::scale(value(a), c), [a, c](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    Tensor& ga = g.grad_mut(a);
    for (std::size_t i = 0; i < go.v.size(); ++i) ga.v[i] += c * go.v[i];
  });
}

Graph::NodeId Graph::tanh(NodeId a) {
  return push(tanh_t(value(a)), [a](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    const Tensor& y = g.value(me);
    Tensor& ga = g.grad_mut(a);
    for (std::size_t i = 0; i < go.v.size(); ++i) ga.v[i] += go.v[i] * (1.0 - y.v[i] * y.v[i]);
  });
}

Graph::NodeId Graph::sigmoid(NodeId a) {
  return push(sigmoid_t(value(a)), [a](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    const Tensor& y = g.value(me);
    Tensor& ga = g.grad_mut(a);
    for (std::size_t i = 0; i < go.v.size(); ++i) ga.v[i] += go.v[i] * y.v[i] * (1.0 - y.v[i]);
  });
}

Graph::NodeId Graph::exp(NodeId a) {
  return push(exp_t(value(a)), [a](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    const Tensor& y = g.value(me);
    Tensor& ga = g.grad_mut(a);
    for (std::size_t i = 0; i < go.v.size(); ++i) ga.v[i] += go.v[i] * y.v[i];
  });
}

Graph::NodeId Graph::matvec(NodeId w, NodeId x) {
  return push(las::matvec(value(w), value(x)), [w, x](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    const Tensor& vw = g.value(w);
    const Tensor& vx = g.value(x);
    Tensor& gw = g.grad_mut(w);
    Tensor& gx = g.grad_mut(x);
    for (std::int64_t r = 0; r < vw.rows(); ++r) {
      const double gr = go.v[static_cast<std::size_t>(r)];
      const double* wr = vw.v.data() + r * vw.cols();
      double* gwr = gw.v.data() + r * vw.cols();
      for (std::int64_t c = 0; c < vw.cols(); ++c) {
        gwr[c] += gr * vx.v[static_cast<std::size_t>(c)];
        gx.v[static_cast<std::size_t>(c)] += gr * wr[c];
      }
    }
  });
}

Graph::NodeId Graph::matmul_nt(NodeId a, NodeId b) {
  return push(las::matmul_nt(value(a), value(b)), [a, b](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);  // [m x n]
    const Tensor& va = g.value(a);  // [m x k]
    const Tensor& vb = g.value(b);  // [n x k]
    Tensor& ga = g.grad_mut(a);
    Tensor& gb = g.grad_mut(b);
    for (std::int64_t i = 0; i < va.rows(); ++i) {
      for (std::int64_t j = 0; j < vb.rows(); ++j) {
        const double gij = go.at(i, j);
        const double* bj = vb.v.data() + j * vb.cols();
        const double* ai = va.v.data() + i * va.cols();
        double* gai = ga.v.data() + i * va.cols();
        double* gbj = gb.v.data() + j * vb.cols();
        for (std::int64_t k = 0; k < va.cols(); ++k) {
          gai[k] += gij * bj[k];
          gbj[k] += gij * ai[k];
        }
      }
    }
  });
}

Graph::NodeId Graph::add_rowbcast(NodeId m, NodeId q) {
  return push(las::add_rowbcast(value(m), value(q)), [m, q](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    Tensor& gm = g.grad_mut(m);
    Tensor& gq = g.grad_mut(q);
    for (std::int64_t r = 0; r < go.rows(); ++r) {
      for (std::int64_t c = 0; c < go.cols(); ++c) {
        gm.at(r, c) += go.at(r, c);
        gq.v[static_cast<std::size_t>(c)] += go.at(r, c);
      }
    }
  });
}

Graph::NodeId Graph::matt_vec(NodeId m, NodeId w) {
  return push(las::matt_vec(value(m), value(w)), [m, w](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);  // [c]
    const Tensor& vm = g.value(m);  // [r x c]
    const Tensor& vw = g.value(w);  // [r]
    Tensor& gm = g.grad_mut(m);
    Tensor& gw = g.grad_mut(w);
    for (std::int64_t r = 0; r < vm.rows(); ++r) {
      const double wr = vw.v[static_cast<std::size_t>(r)];
      const double* mr = vm.v.data() + r * vm.cols();
      double* gmr = gm.v.data() + r * vm.cols();
      double acc = 0.0;
      for (std::int64_t c = 0; c < vm.cols(); ++c) {
        gmr[c] += wr * go.v[static_cast<std::size_t>(c)];
        acc += mr[c] * go.v[static_cast<std::size_t>(c)];
      }
      gw.v[static_cast<std::size_t>(r)] += acc;
    }
  });
}

Graph::NodeId Graph::concat(NodeId a, NodeId b) {
  return push(las::concat(value(a), value(b)), [a, b](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    Tensor& ga = g.grad_mut(a);
    Tensor& gb = g.grad_mut(b);
    for (std::size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += go.v[i];
    for (std::size_t i = 0; i < gb.v.size(); ++i) gb.v[i] += go.v[ga.v.size() + i];
  });
}

Graph::NodeId Graph::slice(NodeId a, std::int64_t begin, std::int64_t len) {
  return push(las::slice(value(a), begin, len), [a, begin, len](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    Tensor& ga = g.grad_mut(a);
    for (std::int64_t i = 0; i < len; ++i) ga.v[static_cast<std::size_t>(begin + i)] += go.v[static_cast<std::size_t>(i)];
  });
}

Graph::NodeId Graph::stack_rows(const std::vector<NodeId>& rows) {
  std::vector<Tensor> vals;
  vals.reserve(rows.size());
  for (NodeId r : rows) vals.push_back(value(r));
  return push(las::stack_rows(vals), [rows](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    const std::int64_t c = go.cols();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Tensor& gr = g.grad_mut(rows[r]);
      const double* src = go.v.data() + static_cast<std::int64_t>(r) * c;
      for (std::int64_t i = 0; i < c; ++i) gr.v[static_cast<std::size_t>(i)] += src[i];
    }
  });
}

Graph::NodeId Graph::embed_row(NodeId m, std::int64_t r) {
  return push(las::row(value(m), r), [m, r](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    Tensor& gm = g.grad_mut(m);
    const std::int64_t c = g.value(m).cols();
    for (std::int64_t i = 0; i < c; ++i) gm.v[static_cast<std::size_t>(r * c + i)] += go.v[static_cast<std::size_t>(i)];
  });
}

Graph::NodeId Graph::softmax(NodeId x) {
  return push(las::softmax(value(x)), [x](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    const Tensor& y = g.value(me);
    Tensor& gx = g.grad_mut(x);
    double gy = 0.0;
    for (std::size_t i = 0; i < y.v.size(); ++i) gy += go.v[i] * y.v[i];
    for (std::size_t i = 0; i < y.v.size(); ++i) gx.v[i] += y.v[i] * (go.v[i] - gy);
  });
}

Graph::NodeId Graph::log_softmax(NodeId x) {
  return push(las::log_softmax(value(x)), [x](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);
    const Tensor& y = g.value(me);  // log probs
    Tensor& gx = g.grad_mut(x);
    double gsum = 0.0;
    for (double gi : go.v) gsum += gi;
    for (std::size_t i = 0; i < y.v.size(); ++i) gx.v[i] += go.v[i] - std::exp(y.v[i]) * gsum;
  });
}

Graph::NodeId Graph::conv1d(NodeId signal, NodeId filters) {
  return push(conv1d_same(value(signal), value(filters)), [signal, filters](Graph& g, NodeId me) {
    const Tensor& go = g.grad(me);  // [U x F]
    const Tensor& vs = g.value(signal);
    const Tensor& vf = g.value(filters);
    Tensor& gs = g.grad_mut(signal);
    Tensor& gf = g.grad_mut(filters);
    const std::int64_t u = vs.dim(0);
    const std::int64_t c = vs.rank() == 2 ? vs.cols() : 1;
    const std::int64_t f = vf.dim(0);
    const std::int64_t k = vf.rank() == 2 ? vf.dim(1) : vf.dim(2);
    const std::int64_t lpad = (k - 1) / 2;
    for (std::int64_t i = 0; i < u; ++i) {
      for (std::int64_t fi = 0; fi < f; ++fi) {
        const double gio = go.at(i, fi);
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const double* flt = vf.v.data() + (fi * c + ch) * k;
          double* gflt = gf.v.data() + (fi * c + ch) * k;
          for (std::int64_t t = 0; t < k; ++t) {
            const std::int64_t src = i + t - lpad;
            if (src < 0 || src >= u) continue;
            gflt[t] += gio * vs.v[static_cast<std::size_t>(src * c + ch)];
            gs.v[static_cast<std::size_t>(src * c + ch)] += gio * flt[t];
          }
        }
      }
    }
  });
}

Graph::NodeId Graph::dot(NodeId a, NodeId b) {
  return push(Tensor::scalar(las::dot(value(a), value(b))), [a, b](Graph& g, NodeId me) {
    const double go = g.grad(me).v[0];
    const Tensor& va = g.value(a);
    const Tensor& vb = g.value(b);
    Tensor& ga = g.grad_mut(a);
    Tensor& gb = g.grad_mut(b);
    for (std::size_t i = 0; i < va.v.size(); ++i) {
      ga.v[i] += go * vb.v[i];
      gb.v[i] += go * va.v[i];
    }
  });
}

Graph::NodeId Graph::sum(NodeId a) {
  return push(Tensor::scalar(las::sum(value(a))), [a](Graph& g, NodeId me) {
    const double go = g.grad(me).v[0];
    Tensor& ga = g.grad_mut(a);
    for (double& x : ga.v) x += go;
  });
}

void Graph::backward(NodeId loss) {
  if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size()) {
    throw std::invalid_argument("backward: bad loss node");
  }
  if (nodes_[static_cast<std::size_t>(loss)].value.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar node");
  }
  for (Node& n : nodes_) {
    n.grad = Tensor::zeros(n.value.shape);
  }
  nodes_[static_cast<std::size_t>(loss)].grad.v[0] = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.back) n.back(*this, id);
  }
  for (const auto& [name, id] : params_) {
    if (!nodes_[static_cast<std::size_t>(id)].grad.all_finite()) {
      throw NumericError("backward: non-finite gradient for parameter " + name);
    }
  }
}

std::map<std::string, Tensor> Graph::param_grads() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : params_) out.emplace(name, nodes_[static_cast<std::size_t>(id)].grad);
  return out;
}

}  // namespace las

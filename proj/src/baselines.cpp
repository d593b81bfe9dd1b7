#include "tango/baselines.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace tango::baselines {

namespace {

Mat uniform_init(int rows, int cols, Rng& rng) {
    const double bound = std::sqrt(1.0 / rows);
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
    return m;
}

struct MlpIds {
    int w1, b1, w2, b2, w3, b3, vw, vb, aw, ab;
};

MlpIds put_params(ad::Tape& t, const MlpParams& p) {
    MlpIds ids{};
    ids.w1 = t.leaf(p.w1);
    ids.b1 = t.leaf(p.b1);
    ids.w2 = t.leaf(p.w2);
    ids.b2 = t.leaf(p.b2);
    if (p.dueling) {
        ids.vw = t.leaf(p.vw);
        ids.vb = t.leaf(p.vb);
        ids.aw = t.leaf(p.aw);
        ids.ab = t.leaf(p.ab);
    } else {
        ids.w3 = t.leaf(p.w3);
        ids.b3 = t.leaf(p.b3);
    }
    return ids;
}

int mlp_on_tape(ad::Tape& t, const MlpParams& p, const MlpIds& ids, int x_id) {
    int h = t.relu(t.add_row_broadcast(t.matmul(x_id, ids.w1), ids.b1));
    h = t.relu(t.add_row_broadcast(t.matmul(h, ids.w2), ids.b2));
    if (!p.dueling) return t.add_row_broadcast(t.matmul(h, ids.w3), ids.b3);
    const int v = t.add_row_broadcast(t.matmul(h, ids.vw), ids.vb);  // B x 1
    const int a = t.add_row_broadcast(t.matmul(h, ids.aw), ids.ab);  // B x out
    return t.add_col_broadcast(t.sub_col_broadcast(a, t.row_mean(a)), v);
}

void accumulate(ad::Tape& t, const MlpParams& p, const MlpIds& ids, MlpParams& grads) {
    grads.w1 += t.gradient(ids.w1);
    grads.b1 += t.gradient(ids.b1);
    grads.w2 += t.gradient(ids.w2);
    grads.b2 += t.gradient(ids.b2);
    if (p.dueling) {
        grads.vw += t.gradient(ids.vw);
        grads.vb += t.gradient(ids.vb);
        grads.aw += t.gradient(ids.aw);
        grads.ab += t.gradient(ids.ab);
    } else {
        grads.w3 += t.gradient(ids.w3);
        grads.b3 += t.gradient(ids.b3);
    }
}

void sgd(MlpParams& p, const MlpParams& g, double lr) {
    auto pb = p.blocks();
    auto gb = g.blocks();
    for (size_t i = 0; i < pb.size(); ++i)
        if (pb[i]->size() > 0) *pb[i] -= lr * (*gb[i]);
}

Eigen::Vector4d scale_state(const graph::FeatureScaler& scaler, const env::NetworkState& s) {
    return scaler.scale_frozen(s);
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    return logits.array() - lse;
}

}  // namespace

MlpParams MlpParams::init(int in, int hidden, int out, bool dueling, Rng& rng) {
    if (in < 1 || hidden < 1 || out < 1)
        throw std::invalid_argument("mlp init: dimensions must be >= 1");
    MlpParams p;
    p.in = in;
    p.hidden = hidden;
    p.out = out;
    p.dueling = dueling;
    p.w1 = uniform_init(in, hidden, rng);
    p.b1 = Mat::Zero(1, hidden);
    p.w2 = uniform_init(hidden, hidden, rng);
    p.b2 = Mat::Zero(1, hidden);
    if (dueling) {
        p.vw = uniform_init(hidden, 1, rng);
        p.vb = Mat::Zero(1, 1);
        p.aw = uniform_init(hidden, out, rng);
        p.ab = Mat::Zero(1, out);
    } else {
        p.w3 = uniform_init(hidden, out, rng);
        p.b3 = Mat::Zero(1, out);
    }
    return p;
}

MlpParams MlpParams::zeros_like(const MlpParams& p) {
    MlpParams z = p;
    for (Mat* m : z.blocks()) m->setZero();
    return z;
}

std::vector<Mat*> MlpParams::blocks() {
    return {&w1, &b1, &w2, &b2, &w3, &b3, &vw, &vb, &aw, &ab};
}

std::vector<const Mat*> MlpParams::blocks() const {
    return {&w1, &b1, &w2, &b2, &w3, &b3, &vw, &vb, &aw, &ab};
}

Mat mlp_forward(const MlpParams& p, const Mat& x) {
    if (x.cols() != p.in) throw std::invalid_argument("mlp_forward: input width mismatch");
    Mat h = ((x * p.w1).rowwise() + p.b1.row(0)).cwiseMax(0.0);
    h = ((h * p.w2).rowwise() + p.b2.row(0)).cwiseMax(0.0);
    if (!p.dueling) return (h * p.w3).rowwise() + p.b3.row(0);
    const Mat v = (h * p.vw).rowwise() + p.vb.row(0);
    Mat a = (h * p.aw).rowwise() + p.ab.row(0);
    Mat q(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r)
        q.row(r) = (a.row(r).array() - a.row(r).mean() + v(r, 0)).matrix();
    return q;
}

Eigen::VectorXd dueling_aggregate(double v, const Eigen::VectorXd& a) {
    return (a.array() - a.mean() + v).matrix();
}

double dqn_target(double r, bool done, double gamma, const Eigen::VectorXd& q_target_next) {
    return done ? r : r + gamma * q_target_next.maxCoeff();
}

double double_dqn_target(double r, bool done, double gamma,
                         const Eigen::VectorXd& q_online_next,
                         const Eigen::VectorXd& q_target_next) {
    if (q_online_next.size() != q_target_next.size())
        throw std::invalid_argument("double_dqn_target: vector size mismatch");
    if (done) return r;
    int best = 0;
    q_online_next.maxCoeff(&best);
    return r + gamma * q_target_next(best);
}

void ReplayBuffer::push(Transition t) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayBuffer::sample(size_t batch, Rng& rng) const {
    if (data_.empty()) throw std::logic_error("replay sample from empty buffer");
    std::vector<const Transition*> out(batch);
    for (size_t i = 0; i < batch; ++i) out[i] = &data_[rng.below(data_.size())];
    return out;
}

void DqnConfig::validate() const {
    if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("dqn.gamma must be in [0, 1]");
    if (lr <= 0.0) throw std::invalid_argument("dqn.lr must be > 0");
    if (episodes < 1) throw std::invalid_argument("dqn.episodes must be >= 1");
    if (buffer_capacity < 1 || batch_size < 1 || target_sync_period < 1 || hidden < 1)
        throw std::invalid_argument("dqn sizes must be >= 1");
    if (eps_start < 0.0 || eps_start > 1.0 || eps_end < 0.0 || eps_end > eps_start)
        throw std::invalid_argument("dqn epsilon schedule must satisfy 0 <= end <= start <= 1");
    if (eps_decay_fraction <= 0.0 || eps_decay_fraction > 1.0)
        throw std::invalid_argument("dqn.eps_decay_fraction must be in (0, 1]");
}

double epsilon_schedule(int step, int total_steps, const DqnConfig& cfg) {
    const double decay_steps = std::max(1.0, total_steps * cfg.eps_decay_fraction);
    const double frac = std::min(1.0, step / decay_steps);
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;
}

DqnResult train_dqn_family(env::Environment& environment, DqnVariant variant,
                           const DqnConfig& cfg) {
    cfg.validate();
    const int n_actions = static_cast<int>(environment.actions().actions.size());
    const bool dueling = variant == DqnVariant::Dueling;

    Rng init_rng = Rng::substream(cfg.seed, 11);
    Rng act_rng = Rng::substream(cfg.seed, 12);
    Rng replay_rng = Rng::substream(cfg.seed, 13);

    DqnResult result;
    result.params = MlpParams::init(4, cfg.hidden, n_actions, dueling, init_rng);
    MlpParams target = result.params;
    ReplayBuffer buffer(cfg.buffer_capacity);

    const int total_steps = cfg.episodes * environment.steps_per_episode();
    int global_step = 0;

    for (int episode = 0; episode < cfg.episodes; ++episode) {
        const auto t0 = std::chrono::steady_clock::now();
        env::NetworkState state = environment.reset();
        double total_reward = 0.0, loss_sum = 0.0;
        int updates = 0;
        double eps = cfg.eps_start;

        while (true) {
            result.scaler.scale(state);  // keep the running ranges current
            eps = epsilon_schedule(global_step, total_steps, cfg);
            int a;
            if (act_rng.uniform() < eps) {
                a = static_cast<int>(act_rng.below(n_actions));
            } else {
                const Eigen::Vector4d x = scale_state(result.scaler, state);
                const Mat q = mlp_forward(result.params, x.transpose());
                Eigen::Index best = 0;
                q.row(0).maxCoeff(&best);
                a = static_cast<int>(best);
            }
            const env::StepResult sr = environment.step(environment.actions().actions[a]);
            total_reward += sr.reward;
            buffer.push({Eigen::Vector4d(state.s1_snr, state.s2_traffic, state.s3_residual,
                                         state.s4_gap),
                         a, sr.reward,
                         Eigen::Vector4d(sr.next.s1_snr, sr.next.s2_traffic, sr.next.s3_residual,
                                         sr.next.s4_gap),
                         sr.done});
            ++global_step;

            if (buffer.size() >= static_cast<size_t>(cfg.batch_size)) {
                const auto batch = buffer.sample(cfg.batch_size, replay_rng);
                Mat x(cfg.batch_size, 4), x2(cfg.batch_size, 4);
                std::vector<int> actions(cfg.batch_size);
                Mat y(cfg.batch_size, 1);
                auto scale4 = [&](const Eigen::Vector4d& v) {
                    return scale_state(result.scaler,
                                       env::NetworkState{v[0], v[1], v[2], v[3]});
                };
                for (int i = 0; i < cfg.batch_size; ++i) {
                    x.row(i) = scale4(batch[i]->s).transpose();
                    x2.row(i) = scale4(batch[i]->s2).transpose();
                    actions[i] = batch[i]->a;
                }
                const Mat q_target_next = mlp_forward(target, x2);
                if (variant == DqnVariant::Double) {
                    const Mat q_online_next = mlp_forward(result.params, x2);
                    for (int i = 0; i < cfg.batch_size; ++i)
                        y(i, 0) = double_dqn_target(batch[i]->r, batch[i]->done, cfg.gamma,
                                                    q_online_next.row(i).transpose(),
                                                    q_target_next.row(i).transpose());
                } else {
                    for (int i = 0; i < cfg.batch_size; ++i)
                        y(i, 0) = dqn_target(batch[i]->r, batch[i]->done, cfg.gamma,
                                             q_target_next.row(i).transpose());
                }

                ad::Tape t;
                const MlpIds ids = put_params(t, result.params);
                const int q_id = mlp_on_tape(t, result.params, ids, t.constant(x));
                const int pred = t.pick_per_row(q_id, actions);
                const int diff = t.sub(pred, t.constant(y));
                const int loss_id =
                    t.affine(t.sum_all(t.square(diff)), 1.0 / cfg.batch_size, 0.0);
                t.backward(loss_id);
                MlpParams grads = MlpParams::zeros_like(result.params);
                accumulate(t, result.params, ids, grads);
                sgd(result.params, grads, cfg.lr);
                loss_sum += t.value(loss_id)(0, 0);
                ++updates;
            }
            if (global_step % cfg.target_sync_period == 0) target = result.params;
            state = sr.next;
            if (sr.done) break;
        }
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.episodes.push_back(
            {episode, total_reward, updates ? loss_sum / updates : 0.0, eps, wall});
    }
    return result;
}

ReinforceResult train_vanilla_reinforce(env::Environment& environment,
                                        const ReinforceConfig& cfg) {
    if (cfg.lr <= 0.0 || cfg.episodes < 1 || cfg.hidden < 1 || cfg.gamma < 0.0 ||
        cfg.gamma > 1.0)
        throw std::invalid_argument("invalid vanilla reinforce config");
    const int n_actions = static_cast<int>(environment.actions().actions.size());

    Rng init_rng = Rng::substream(cfg.seed, 21);
    Rng act_rng = Rng::substream(cfg.seed, 22);

    ReinforceResult result;
    result.params = MlpParams::init(4, cfg.hidden, n_actions, /*dueling=*/false, init_rng);

    for (int episode = 0; episode < cfg.episodes; ++episode) {
        const auto t0 = std::chrono::steady_clock::now();
        env::NetworkState state = environment.reset();
        std::vector<Eigen::Vector4d> states;
        std::vector<int> actions;
        std::vector<double> rewards;

        while (true) {
            const Eigen::Vector4d x = result.scaler.scale(state);
            const Mat logits = mlp_forward(result.params, x.transpose());
            const Eigen::VectorXd logp = log_softmax(logits.row(0).transpose());
            const agent::SampledAction a = agent::sample_action(logp, act_rng);
            const env::StepResult sr = environment.step(environment.actions().actions[a.index]);
            states.push_back(x);
            actions.push_back(a.index);
            rewards.push_back(sr.reward);
            state = sr.next;
            if (sr.done) break;
        }

        const std::vector<double> returns = agent::discounted_returns(rewards, cfg.gamma);
        const int n = static_cast<int>(states.size());
        Mat x(n, 4), g(n, 1);
        for (int i = 0; i < n; ++i) {
            x.row(i) = states[i].transpose();
            g(i, 0) = returns[i];
        }
        ad::Tape t;
        const MlpIds ids = put_params(t, result.params);
        const int logp_id =
            t.log_softmax_rows(mlp_on_tape(t, result.params, ids, t.constant(x)));
        const int picked = t.pick_per_row(logp_id, actions);
        const int loss_id = t.affine(t.sum_all(t.cwise_mul(picked, t.constant(g))), -1.0, 0.0);
        t.backward(loss_id);
        MlpParams grads = MlpParams::zeros_like(result.params);
        accumulate(t, result.params, ids, grads);
        sgd(result.params, grads, cfg.lr);

        double total = 0.0;
        for (double r : rewards) total += r;
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.episodes.push_back({episode, total, t.value(loss_id)(0, 0), 0.0, wall});
    }
    return result;
}

agent::EvalResult evaluate_greedy(const MlpParams& params, const graph::FeatureScaler& scaler,
                                  env::Environment& environment, int n_trials,
                                  double noise_sigma, uint64_t noise_seed) {
    auto choose = [&](const env::NetworkState& observed) {
        const Eigen::Vector4d x = scaler.scale_frozen(observed);
        const Mat q = mlp_forward(params, x.transpose());
        Eigen::Index best = 0;
        q.row(0).maxCoeff(&best);
        return environment.actions().actions[best];
    };
    return agent::evaluate_policy_fn(choose, environment, n_trials, noise_sigma, noise_seed);
}

}  // namespace tango::baselines

//! Independent scalar re-implementations used as test oracles.

use trajshield::data::{Trajectory, HOURS};
use trajshield::neural::{Activation, Dense, Lstm};
use trajshield::trajgan::{Discriminator, FrontEnd, Generator};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `act(x W + b)` with explicit loops.
pub fn dense(layer: &Dense, x: &[f64]) -> Vec<f64> {
    let (n_in, n_out) = (layer.in_dim(), layer.out_dim());
    assert_eq!(x.len(), n_in);
    let w = layer.weight.value.data();
    let mut y: Vec<f64> = (0..n_out)
        .map(|j| {
            let mut s = layer.bias.value.data()[j];
            for i in 0..n_in {
                s += x[i] * w[i * n_out + j];
            }
            s
        })
        .collect();
    match layer.activation {
        Activation::None => {}
        Activation::Relu => y.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Tanh => y.iter_mut().for_each(|v| *v = v.tanh()),
        Activation::Sigmoid => y.iter_mut().for_each(|v| *v = sigmoid(*v)),
        Activation::Softmax => {
            let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = y.iter().map(|v| (v - m).exp()).sum();
            y.iter_mut().for_each(|v| *v = (*v - m).exp() / z);
        }
    }
    y
}

/// One LSTM step with gates `[i, f, g, o]`.
pub fn lstm_step(lstm: &Lstm, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let u = lstm.units();
    let (wx, wh, b) = (lstm.w_input.value.data(), lstm.w_recurrent.value.data(), lstm.bias.value.data());
    let mut z = b.to_vec();
    for (k, zk) in z.iter_mut().enumerate() {
        for (i, xi) in x.iter().enumerate() {
            *zk += xi * wx[i * 4 * u + k];
        }
        for (j, hj) in h.iter().enumerate() {
            *zk += hj * wh[j * 4 * u + k];
        }
    }
    let mut h2 = vec![0.0; u];
    let mut c2 = vec![0.0; u];
    for j in 0..u {
        let i_g = sigmoid(z[j]);
        let f_g = sigmoid(z[u + j]);
        let g_g = z[2 * u + j].tanh();
        let o_g = sigmoid(z[3 * u + j]);
        c2[j] = f_g * c[j] + i_g * g_g;
        h2[j] = o_g * c2[j].tanh();
    }
    (h2, c2)
}

/// Embeddings and fusion for one slot: `[Δlat, Δlon]`, day, hour and
/// category rows, plus optional noise.
pub fn fuse(front: &FrontEnd, dev: &[f64], day: &[f64], hour: &[f64], cat: &[f64], noise: &[f64]) -> Vec<f64> {
    let mut f = dense(&front.spatial, dev);
    f.extend(dense(&front.day, day));
    f.extend(dense(&front.hour, hour));
    f.extend(dense(&front.category, cat));
    f.extend_from_slice(noise);
    dense(&front.fusion, &f)
}

/// A single trajectory as per-slot attribute rows.
pub struct Slots {
    pub dev: Vec<[f64; 2]>,
    pub day: Vec<Vec<f64>>,
    pub hour: Vec<Vec<f64>>,
    pub cat: Vec<Vec<f64>>,
}

pub fn one_hot(k: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

impl Slots {
    pub fn of(t: &Trajectory, centroid: (f64, f64), categories: usize) -> Self {
        Self {
            dev: t.points.iter().map(|p| [p.lat - centroid.0, p.lon - centroid.1]).collect(),
            day: t.points.iter().map(|p| one_hot(p.day as usize, 7)).collect(),
            hour: t.points.iter().map(|p| one_hot(p.hour as usize, HOURS)).collect(),
            cat: t.points.iter().map(|p| one_hot(p.category, categories)).collect(),
        }
    }
}

/// Generator outputs for one unpadded trajectory, slot by slot:
/// `(deviation, day probs, hour probs, category probs)`.
pub fn generator(g: &Generator, s: &Slots, noise: &[Vec<f64>]) -> Vec<([f64; 2], Vec<f64>, Vec<f64>, Vec<f64>)> {
    let u = g.lstm.units();
    let (mut h, mut c) = (vec![0.0; u], vec![0.0; u]);
    let mut out = Vec::new();
    for t in 0..s.dev.len() {
        let f = fuse(&g.front, &s.dev[t], &s.day[t], &s.hour[t], &s.cat[t], &noise[t]);
        (h, c) = lstm_step(&g.lstm, &f, &h, &c);
        let sp = dense(&g.dec_spatial, &h);
        out.push((
            [sp[0] * g.stretch.0, sp[1] * g.stretch.1],
            dense(&g.dec_day, &h),
            dense(&g.dec_hour, &h),
            dense(&g.dec_category, &h),
        ));
    }
    out
}

/// Probability that one unpadded trajectory is real.
pub fn discriminator(d: &Discriminator, s: &Slots) -> f64 {
    let u = d.lstm.units();
    let (mut h, mut c) = (vec![0.0; u], vec![0.0; u]);
    for t in 0..s.dev.len() {
        let f = fuse(&d.front, &s.dev[t], &s.day[t], &s.hour[t], &s.cat[t], &[]);
        (h, c) = lstm_step(&d.lstm, &f, &h, &c);
    }
    dense(&d.head, &h)[0]
}

/// Symmetric Hausdorff distance by exhaustive search.
pub fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let directed = |a: &[(f64, f64)], b: &[(f64, f64)]| {
        a.iter()
            .map(|p| {
                b.iter()
                    .map(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Convex hull by gift wrapping (Jarvis march), counter-clockwise.
pub fn jarvis_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let d2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    let start = pts[0];
    let mut hull = vec![start];
    let mut current = start;
    loop {
        let mut next = if pts[0] == current { pts[1] } else { pts[0] };
        for &p in &pts {
            if p == current {
                continue;
            }
            let turn = cross(current, next, p);
            // p is clockwise of next, or collinear and farther
            if turn < 0.0 || (turn == 0.0 && d2(current, p) > d2(current, next)) {
                next = p;
            }
        }
        if next == start {
            break;
        }
        hull.push(next);
        current = next;
        if hull.len() > pts.len() {
            panic!("gift wrapping did not close");
        }
    }
    hull
}

/// Point-in-convex-polygon test for a counter-clockwise hull.
pub fn inside(hull: &[(f64, f64)], p: (f64, f64)) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0
    })
}

/// Monte-Carlo estimate of the hull Jaccard index over the joint bounding box.
pub fn monte_carlo_jaccard(a: &[(f64, f64)], b: &[(f64, f64)], samples: usize, rng: &mut impl rand::Rng) -> f64 {
    let (ha, hb) = (jarvis_hull(a), jarvis_hull(b));
    let all: Vec<(f64, f64)> = a.iter().chain(b).copied().collect();
    let (x0, x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |m, p| (m.0.min(p.0), m.1.max(p.0)));
    let (y0, y1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |m, p| (m.0.min(p.1), m.1.max(p.1)));
    let (mut inter, mut union) = (0usize, 0usize);
    for _ in 0..samples {
        let p = (rng.random_range(x0..x1), rng.random_range(y0..y1));
        let (ia, ib) = (inside(&ha, p), inside(&hb, p));
        inter += (ia && ib) as usize;
        union += (ia || ib) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Category-by-hour counts tallied from a flat list of visits.
pub fn tally(trajectories: &[Trajectory], categories: usize) -> Vec<Vec<u64>> {
    let mut grid = vec![vec![0u64; HOURS]; categories];
    for t in trajectories {
        for p in &t.points {
            grid[p.category][p.hour as usize] += 1;
        }
    }
    grid
}

/// Pearson correlation from the textbook formula over raw sums.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

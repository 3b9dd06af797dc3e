//! Deterministic stand-ins for application-specific operators.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use crate::model::{KeyVal, UdoBehavior, Value};

/// Words scored by the sentiment stand-in.
const SENTIMENT_WORDS: [(&str, f64); 6] = [("ab", 1.0), ("cd", 1.0), ("ij", 0.5), ("ef", -1.0), ("gh", -1.0), ("kl", -0.5)];

/// Selects the `k`-th smallest value (0-based) with the median-of-medians
/// (BFPRT) algorithm in worst-case linear time.
pub fn bfprt_select(values: &mut [f64], k: usize) -> f64 {
    assert!(k < values.len(), "selection index out of range");
    let (mut lo, mut hi, mut k) = (0usize, values.len(), k);
    loop {
        let slice = &mut values[lo..hi];
        if slice.len() <= 5 {
            slice.sort_by(f64::total_cmp);
            return slice[k];
        }
        let pivot = median_of_medians(slice);
        // three-way partition around the pivot
        let (mut lt, mut i, mut gt) = (0, 0, slice.len());
        while i < gt {
            match slice[i].total_cmp(&pivot) {
                std::cmp::Ordering::Less => {
                    slice.swap(lt, i);
                    lt += 1;
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    gt -= 1;
                    slice.swap(i, gt);
                }
                std::cmp::Ordering::Equal => i += 1,
            }
        }
        if k < lt {
            hi = lo + lt;
        } else if k < gt {
            return pivot;
        } else {
            k -= gt;
            lo += gt;
        }
    }
}

fn median_of_medians(slice: &[f64]) -> f64 {
    let mut medians: Vec<f64> = slice
        .chunks(5)
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_by(f64::total_cmp);
            c[(c.len() - 1) / 2]
        })
        .collect();
    let mid = (medians.len() - 1) / 2;
    bfprt_select(&mut medians, mid)
}

/// Lower median.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let k = (v.len() - 1) / 2;
    bfprt_select(&mut v, k)
}

pub fn sentiment(text: &str) -> f64 {
    SENTIMENT_WORDS.iter().map(|(w, s)| text.matches(w).count() as f64 * s).sum()
}

fn chunks(text: &str, size: usize) -> impl Iterator<Item = &str> {
    let bytes = text.as_bytes();
    (0..bytes.len()).step_by(size.max(1)).map(move |i| &text[i..(i + size).min(bytes.len())])
}

/// Splits a string into `size`-byte tokens (the generated alphabet is ASCII).
pub fn tokenize(text: &str, size: usize) -> Vec<Arc<str>> {
    chunks(text, size).map(Arc::from).collect()
}

fn num(values: &[Value], i: usize) -> f64 {
    values.get(i).and_then(Value::as_f64).unwrap_or(0.0)
}

#[derive(Debug, Default)]
pub struct UdoState {
    windows: HashMap<KeyVal, VecDeque<f64>>,
    sums: HashMap<KeyVal, (f64, f64)>,
    counts: HashMap<KeyVal, i64>,
}

impl UdoState {
    /// Output tuples for one input tuple. `key` is the key field of keyed behaviors.
    pub fn apply(&mut self, behavior: &UdoBehavior, key: Option<usize>, values: &[Value]) -> Vec<Vec<Value>> {
        let key_value = || values[key.expect("keyed behavior has a key")].clone();
        match behavior {
            UdoBehavior::BfprtOutlier { value_field, buffer, factor } => {
                let v = num(values, *value_field);
                let buf = self.windows.entry(key_value().key()).or_default();
                buf.push_back(v);
                if buf.len() > *buffer {
                    buf.pop_front();
                }
                let m = median(buf.make_contiguous());
                if v > factor * m {
                    vec![vec![key_value(), Value::Double(v), Value::Double(m)]]
                } else {
                    vec![]
                }
            }
            UdoBehavior::Vwap { price_field, volume_field } => {
                let (p, v) = (num(values, *price_field), num(values, *volume_field));
                let acc = self.sums.entry(key_value().key()).or_default();
                acc.0 += p * v;
                acc.1 += v;
                let vwap = if acc.1 > 0.0 { acc.0 / acc.1 } else { p };
                vec![vec![key_value(), Value::Double(p), Value::Double(vwap)]]
            }
            UdoBehavior::BargainIndex { threshold } => {
                let (price, vwap) = (num(values, 1), num(values, 2));
                if price > 0.0 && vwap / price - 1.0 > *threshold {
                    vec![vec![values[0].clone(), Value::Double(price), Value::Double(vwap)]]
                } else {
                    vec![]
                }
            }
            UdoBehavior::TextNormalize { text_field } => {
                let text = values[*text_field].as_str().unwrap_or_default();
                vec![vec![Value::from(text.trim().to_lowercase().as_str())]]
            }
            UdoBehavior::SentimentScore { text_field } => {
                let text = values[*text_field].as_str().unwrap_or_default();
                let score = sentiment(text);
                let label = match score {
                    s if s > 0.0 => "positive",
                    s if s < 0.0 => "negative",
                    _ => "neutral",
                };
                vec![vec![values[*text_field].clone(), Value::Double(score), Value::from(label)]]
            }
            UdoBehavior::RepeatVisit => {
                let c = self.counts.entry(key_value().key()).or_default();
                *c += 1;
                vec![vec![key_value(), Value::Int(*c)]]
            }
            UdoBehavior::GeoBucket { ip_field, buckets } => {
                let ip = match values[*ip_field] {
                    Value::Int(v) => v,
                    _ => 0,
                };
                let region = format!("region-{:03}", ip.rem_euclid(*buckets));
                vec![vec![Value::from(region.as_str()), Value::Int(1)]]
            }
            UdoBehavior::TopicExtract { text_field, chunk } => {
                let text = values[*text_field].as_str().unwrap_or_default();
                tokenize(text, *chunk).into_iter().map(|t| vec![Value::Str(t), Value::Int(1)]).collect()
            }
            UdoBehavior::TopicThreshold { count_field, min_count } => {
                if num(values, *count_field) >= *min_count {
                    vec![values.to_vec()]
                } else {
                    vec![]
                }
            }
            UdoBehavior::RoadMatch { lat_field, lon_field, speed_field, grid } => {
                let cell = |v: f64| (v / grid).floor() as i64;
                let segment = format!("{}:{}", cell(num(values, *lat_field)), cell(num(values, *lon_field)));
                vec![vec![Value::from(segment.as_str()), Value::Double(num(values, *speed_field))]]
            }
            UdoBehavior::AdParse { ad_field } => vec![vec![values[*ad_field].clone(), Value::Int(1)]],
            UdoBehavior::RollingCtr { clicks_field, impressions_field, window } => {
                let (clicks, imps) = (num(values, *clicks_field), num(values, *impressions_field));
                let ctr = if imps > 0.0 { clicks / imps } else { 0.0 };
                let buf = self.windows.entry(key_value().key()).or_default();
                buf.push_back(ctr);
                if buf.len() > *window {
                    buf.pop_front();
                }
                let mean = buf.iter().sum::<f64>() / buf.len() as f64;
                vec![vec![key_value(), Value::Double(ctr), Value::Double(mean)]]
            }
        }
    }
}

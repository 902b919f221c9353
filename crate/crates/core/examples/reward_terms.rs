//! How error, length and the interaction penalty combine into a reward.

use carfollow_sr::reward::{score, RewardConfig};

fn main() {
    let cfg = RewardConfig::default();
    println!("{:>6} {:>4} {:>5} {:>6} {:>7}", "nrmse", "len", "rec", "epoch", "reward");
    for (l_e, p, rec, epoch) in [
        (0.0, 13, true, 1),
        (0.0925, 11, true, 1),
        (0.0925, 11, false, 1),
        (0.0925, 11, false, 11),
        (0.3, 5, true, 20),
        (0.3, 35, true, 20),
    ] {
        let b = score(l_e, p, rec, epoch, &cfg);
        println!("{l_e:>6} {p:>4} {rec:>5} {epoch:>6} {:>7.4}", b.r);
    }
}

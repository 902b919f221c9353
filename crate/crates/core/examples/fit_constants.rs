//! Fit placeholder constants: recover the GM gain from `v_f + c*(v_l - v_f)`.

use carfollow_sr::constopt::{fitted_tree, ConstFitConfig};
use carfollow_sr::expr::ExpressionTree;
use carfollow_sr::search::gm_pool;
use carfollow_sr::traffic::{generate_dataset, CarFollowingModel, GenerateConfig};

fn main() -> carfollow_sr::Result<()> {
    let data = generate_dataset(&GenerateConfig::for_model(CarFollowingModel::GM_DEFAULT, 0))?;
    let skeleton = ExpressionTree::parse_prefix("+ v_f * const - v_l v_f", Some(&gm_pool()))?;
    let (fitted, res) = fitted_tree(&skeleton, &data, &ConstFitConfig::default()).expect("skeleton evaluates");
    println!("{} -> {}", skeleton.infix(), fitted.infix());
    println!("constants {:?}, nrmse {:.3e}, {} iterations", res.values, res.l_e, res.iterations);
    Ok(())
}

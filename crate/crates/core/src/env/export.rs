//! Trajectory CSV export: one row per (episode, timestep, agent).

use std::io::Write;

use super::StepRecord;
use crate::error::Result;

/// Writes `episode,t,agent,obs_0..,act_0..,r_adv,r_team,done`.
pub fn write_trajectories<W: Write>(out: W, episodes: &[Vec<StepRecord>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let first = episodes.iter().flat_map(|e| e.first()).next();
    let (obs_dim, act_dim) = match first {
        Some(r) => (r.obs[0].len(), r.actions[0].to_vec().len()),
        None => (0, 0),
    };
    let mut header = vec!["episode".to_string(), "t".into(), "agent".into()];
    header.extend((0..obs_dim).map(|k| format!("obs_{k}")));
    header.extend((0..act_dim).map(|k| format!("act_{k}")));
    header.extend(["r_adv".into(), "r_team".into(), "done".into()]);
    w.write_record(&header)?;
    for (e, episode) in episodes.iter().enumerate() {
        for rec in episode {
            for (agent, obs) in rec.obs.iter().enumerate() {
                let mut row = vec![e.to_string(), rec.t.to_string(), agent.to_string()];
                row.extend(obs.iter().map(|v| v.to_string()));
                row.extend(rec.actions[agent].to_vec().iter().map(|v| v.to_string()));
                row.push(rec.adversary_reward.to_string());
                row.push(rec.team_reward.to_string());
                row.push((rec.done as u8).to_string());
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

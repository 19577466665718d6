//! Raw traces through sensing, evidence and both protocols.

use pairlab::crypto::GroupId;
use pairlab::evidence::{self, EvidencePolicy};
use pairlab::protocol::fc::{self, FcParams};
use pairlab::protocol::zl::{self, ZlParams};
use pairlab::protocol::TimingScript;
use pairlab::sensing::{self, SensingConfig, UiType};
use pairlab::simnet::{AdversaryScript, SimConfig};
use pairlab::synthgen::{self, UserModel};

fn evidence_from_traces(ui: UiType, id: u64) -> (evidence::Evidence, evidence::Evidence) {
    let cfg = SensingConfig::default();
    let model = UserModel::for_ui(ui);
    let mut rng = synthgen::pair_rng(21, id);
    let s = synthgen::gen_session_rng(&model, ui, &EvidencePolicy::with_pauses(ui), &mut rng).unwrap();
    let tr = synthgen::gen_traces(&s, &mut rng);
    let dev = sensing::extract_device_salients(&tr.device_events, ui, &cfg).unwrap();
    let helper = sensing::helper_salients_from_raw(&tr.helper_trace, &cfg).unwrap();
    let d = evidence::to_intervals(&dev).unwrap();
    let h = evidence::to_intervals(&helper).unwrap();
    assert_eq!(d.intervals, s.device.intervals);
    (d, h)
}

#[test]
fn traces_pair_under_both_protocols() {
    let script = AdversaryScript::honest();
    for ui in UiType::ALL {
        let mut fc_paired = 0;
        let mut zl_paired = 0;
        for id in 0..10 {
            let (d, h) = evidence_from_traces(ui, id);
            let timing = TimingScript::from_evidence(&d, &h);
            let sim = SimConfig::with_seed(id);
            let fcp = FcParams { group: GroupId::Test512, ..FcParams::new(ui) };
            let zlp = ZlParams { group: GroupId::Test512, ..ZlParams::new(ui) };
            fc_paired +=
                fc::run_t2pair(&d, &h, &fcp, &timing, &sim, &script, None).unwrap().both_paired_same_key() as usize;
            zl_paired +=
                zl::run_t2pairpp(&d, &h, &zlp, &timing, &sim, &script, None).unwrap().both_paired_same_key() as usize;
        }
        assert!(fc_paired >= 9, "{ui}: fuzzy commitment {fc_paired}/10");
        assert!(zl_paired >= 9, "{ui}: deadline {zl_paired}/10");
    }
}

#[test]
fn trace_files_round_trip() {
    let model = UserModel::for_ui(UiType::Knob);
    let mut rng = synthgen::pair_rng(5, 0);
    let s =
        synthgen::gen_session_rng(&model, UiType::Knob, &EvidencePolicy::with_pauses(UiType::Knob), &mut rng).unwrap();
    let tr = synthgen::gen_traces(&s, &mut rng);
    let mut imu = Vec::new();
    sensing::write_samples_jsonl(&tr.helper_trace.samples, &mut imu).unwrap();
    assert_eq!(sensing::read_samples_jsonl(imu.as_slice()).unwrap(), tr.helper_trace.samples);
    let mut events = Vec::new();
    sensing::write_events_jsonl(&tr.device_events, &mut events).unwrap();
    assert_eq!(sensing::read_events_jsonl(events.as_slice()).unwrap(), tr.device_events);
}

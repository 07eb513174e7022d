#![no_main]

use libfuzzer_sys::fuzz_target;
use nacert::crown::BoundNet;
use nacert::network::Network;
use nacert::Hyperrectangle;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    let Ok(net) = Network::from_json(src) else { return };
    let back = Network::from_json(&net.to_json()).expect("own output parses");
    assert_eq!(back.to_json(), net.to_json());
    if net.n() <= 16 {
        let bx = Hyperrectangle::new(vec![0.0; net.n()], vec![1.0; net.n()]).unwrap();
        let _ = net.forward(bx.center());
        let _ = BoundNet::new(&net).affine_bounds(&bx, false);
    }
});

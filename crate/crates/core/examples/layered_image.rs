//! The layered image catalog and the QoE of partially delivered images.

use predsched::model::{default_layer_catalog, interval_qoe, Catalog, Layer, PacketSet, PACKETS_PER_IMAGE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = Catalog::new(default_layer_catalog())?;
    println!("{PACKETS_PER_IMAGE} packets per image, total value {:.3}", catalog.total_value());
    for layer in Layer::ALL {
        println!("{layer:?}: {} packets of value {}", layer.packet_count(), layer.packet_value());
    }

    let wanted: PacketSet = catalog.packets().iter().map(|p| p.id).collect();
    let mut delivered = PacketSet::new();
    for p in catalog.packets() {
        delivered.insert(p.id);
        if delivered.len() == 1 || delivered.len() == 5 || delivered.len() == 17 {
            println!("first {:>2} packets delivered: QoE {:.3}", delivered.len(), interval_qoe(&wanted, &delivered, &catalog)?);
        }
    }
    Ok(())
}

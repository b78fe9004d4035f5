//! Scaled Bessel values against a 50-digit reference grid.

use mspr::skellam::bessel_i_scaled;

/// `(n, x, exp(-x) I_n(x))`; values below 1e-290 omitted.
const REFERENCE: &[(u32, f64, f64)] = &[
    (0, 0.0, 1.0),
    (0, 0.001, 9.990007495835155594e-1),
    (0, 0.1, 9.071009257823010964e-1),
    (0, 0.5, 6.450352704491500681e-1),
    (0, 1.0, 4.657596075936404365e-1),
    (0, 2.0, 3.085083225536710395e-1),
    (0, 5.0, 1.835408126093283531e-1),
    (0, 10.0, 1.278333371634286073e-1),
    (0, 19.5, 9.093943209515648331e-2),
    (0, 25.0, 8.019677354743670842e-2),
    (0, 29.9, 7.326921904600190595e-2),
    (0, 30.0, 7.314594648223729393e-2),
    (0, 40.0, 6.327827987523533026e-2),
    (0, 55.0, 5.391689849393875892e-2),
    (0, 100.0, 3.994437929909668265e-2),
    (0, 250.0, 2.524396938705475363e-2),
    (0, 500.0, 1.784570650015316724e-2),
    (0, 1000.0, 1.261724045589125659e-2),
    (0, 2500.0, 7.979244640108491847e-3),
    (0, 5000.0, 5.642036898744588657e-3),
    (0, 10000.0, 3.989472674604732106e-3),
    (1, 0.0, 0.0),
    (1, 0.001, 4.99500312354221337e-4),
    (1, 0.1, 4.529844680880932501e-2),
    (1, 0.5, 1.564208031848716971e-1),
    (1, 1.0, 2.079104153497084489e-1),
    (1, 2.0, 2.152692892489376592e-1),
    (1, 5.0, 1.639722669445423569e-1),
    (1, 10.0, 1.212626813844555187e-1),
    (1, 19.5, 8.857608609431485246e-2),
    (1, 25.0, 7.857611331929277203e-2),
    (1, 29.9, 7.203337491186878615e-2),
    (1, 30.0, 7.191633059864755471e-2),
    (1, 40.0, 6.248222907444206075e-2),
    (1, 55.0, 5.342447519519451947e-2),
    (1, 100.0, 3.974415302513025267e-2),
    (1, 250.0, 2.519343075711730526e-2),
    (1, 500.0, 1.782785185289805646e-2),
    (1, 1000.0, 1.261093025692862947e-2),
    (1, 2500.0, 7.97764863153170346e-3),
    (1, 5000.0, 5.641472666838885904e-3),
    (1, 10000.0, 3.989273195983662264e-3),
    (2, 0.0, 0.0),
    (2, 0.001, 1.248750728854274058e-7),
    (2, 0.1, 1.131989606114596294e-3),
    (2, 0.5, 1.935205770966327954e-2),
    (2, 1.0, 4.993877689422353876e-2),
    (2, 2.0, 9.323903330473338037e-2),
    (2, 5.0, 1.179519058315114103e-1),
    (2, 10.0, 1.035808008865375036e-1),
    (2, 19.5, 8.185470531625239587e-2),
    (2, 25.0, 7.391068448189328666e-2),
    (2, 29.9, 6.84509330987197129e-2),
    (2, 30.0, 6.835152444232745695e-2),
    (2, 40.0, 6.015416842151322723e-2),
    (2, 55.0, 5.197419030502259458e-2),
    (2, 100.0, 3.914949623859407759e-2),
    (2, 250.0, 2.504242194099781519e-2),
    (2, 500.0, 1.777439509274157501e-2),
    (2, 1000.0, 1.259201859537739933e-2),
    (2, 2500.0, 7.972862521203266484e-3),
    (2, 5000.0, 5.639780309677853103e-3),
    (2, 10000.0, 3.988674819965535374e-3),
    (3, 0.0, 0.0),
    (3, 0.001, 2.081251171397724567e-11),
    (3, 0.1, 1.886256422547326246e-5),
    (3, 0.5, 1.604341507565460843e-3),
    (3, 1.0, 8.155307772814293817e-3),
    (3, 2.0, 2.879122263947089841e-2),
    (3, 5.0, 6.961074227933322868e-2),
    (3, 10.0, 7.983036102984051729e-2),
    (3, 19.5, 7.178537731149384818e-2),
    (3, 25.0, 6.675040380218984616e-2),
    (3, 29.9, 6.287605944715711887e-2),
    (3, 30.0, 6.280279400633722711e-2),
    (3, 40.0, 5.646681223229073803e-2),
    (3, 55.0, 4.964453408210196714e-2),
    (3, 100.0, 3.817817317558648957e-2),
    (3, 250.0, 2.479275200606134022e-2),
    (3, 500.0, 1.768565669215612386e-2),
    (3, 1000.0, 1.256056218254711987e-2),
    (3, 2500.0, 7.964892051497778234e-3),
    (3, 5000.0, 5.636960842591143621e-3),
    (3, 10000.0, 3.98767772605567605e-3),
    (5, 0.0, 0.0),
    (5, 0.001, 2.601563910047907712e-19),
    (5, 0.1, 2.357329429578213456e-9),
    (5, 0.5, 4.987605521470163935e-6),
    (5, 1.0, 9.986571411208690718e-5),
    (5, 2.0, 1.329761094188157814e-3),
    (5, 5.0, 1.454031812523477127e-2),
    (5, 10.0, 3.528429361493396272e-2),
    (5, 19.5, 4.726562473191812419e-2),
    (5, 25.0, 4.822541577999217462e-2),
    (5, 29.9, 4.793728656570141522e-2),
    (5, 30.0, 4.792520316872122404e-2),
    (5, 40.0, 4.612998291495681472e-2),
    (5, 55.0, 4.287239983474029864e-2),
    (5, 100.0, 3.522946870774177851e-2),
    (5, 250.0, 2.401043533749006524e-2),
    (5, 500.0, 1.740466201675715264e-2),
    (5, 1000.0, 1.246042894076886294e-2),
    (5, 2500.0, 7.939440061800883284e-3),
    (5, 5000.0, 5.627948017060476831e-3),
    (5, 10000.0, 3.984488700285012129e-3),
    (10, 0.0, 0.0),
    (10, 0.001, 2.68845471723696335e-40),
    (10, 0.1, 2.435601678344103917e-20),
    (10, 0.5, 1.603085962952921651e-13),
    (10, 1.0, 1.012752986469206604e-10),
    (10, 2.0, 4.083016611265546697e-8),
    (10, 5.0, 3.086009654986541575e-5),
    (10, 10.0, 9.938819222139977216e-4),
    (10, 19.5, 6.938388320678191552e-3),
    (10, 25.0, 1.071175542592916784e-2),
    (10, 29.9, 1.359301566307155711e-2),
    (10, 30.0, 1.364639094618645669e-2),
    (10, 40.0, 1.796403516386833993e-2),
    (10, 55.0, 2.159672450921864079e-2),
    (10, 100.0, 2.417668271825882836e-2),
    (10, 250.0, 2.066026982080153081e-2),
    (10, 500.0, 1.614589895525917554e-2),
    (10, 1000.0, 1.200159502412421914e-2),
    (10, 2500.0, 7.82121392055663823e-3),
    (10, 5000.0, 5.585892125133979474e-3),
    (10, 10000.0, 3.969574105783223938e-3),
    (25, 0.0, 0.0),
    (25, 0.001, 1.919420545825051044e-108),
    (25, 0.1, 1.738668317606305783e-58),
    (25, 0.5, 3.481378377784155375e-41),
    (25, 1.0, 7.136497416504831574e-34),
    (25, 2.0, 9.066864299265653092e-27),
    (25, 5.0, 4.901402240803699302e-18),
    (25, 10.0, 2.244581141735820234e-12),
    (25, 19.5, 3.641815543311964651e-8),
    (25, 25.0, 5.685861775696209806e-7),
    (25, 29.9, 3.080016167059809903e-6),
    (25, 30.0, 3.171541707614191783e-6),
    (25, 40.0, 2.958916247764358747e-5),
    (25, 55.0, 1.920740227920847395e-4),
    (25, 100.0, 1.756199879504869343e-3),
    (25, 250.0, 7.221968085486387672e-3),
    (25, 500.0, 9.547386802210057135e-3),
    (25, 1000.0, 9.229677165455452175e-3),
    (25, 2500.0, 7.04148990773478569e-3),
    (25, 5000.0, 5.300170720745894372e-3),
    (25, 10000.0, 3.866723524801096855e-3),
    (50, 0.0, 0.0),
    (50, 0.001, 2.917366905159351752e-230),
    (50, 0.1, 2.642513319755225952e-130),
    (50, 0.5, 1.575108726231131839e-95),
    (50, 1.0, 1.079591997337318248e-80),
    (50, 2.0, 4.537850010836832766e-66),
    (50, 5.0, 1.975208710963930235e-47),
    (50, 10.0, 2.159626789445447633e-34),
    (50, 19.5, 1.968140996572464418e-23),
    (50, 25.0, 6.297384245156071619e-20),
    (50, 29.9, 1.242588524005237207e-17),
    (50, 30.0, 1.365287195993837089e-17),
    (50, 40.0, 2.432975410943733082e-14),
    (50, 55.0, 2.237909313181085611e-11),
    (50, 100.0, 1.793805043159796132e-7),
    (50, 250.0, 1.712228903533247728e-4),
    (50, 500.0, 1.464255778967914084e-3),
    (50, 1000.0, 3.613581892594122546e-3),
    (50, 2500.0, 4.839253105025050569e-3),
    (50, 5000.0, 4.393922041071535536e-3),
    (50, 10000.0, 3.520676188722045165e-3),
    (100, 0.0, 0.0),
    (100, 0.1, 7.648531868365188284e-289),
    (100, 0.5, 4.046865003452847383e-219),
    (100, 1.0, 3.117290458782812248e-189),
    (100, 2.0, 1.464559830187881782e-159),
    (100, 5.0, 4.779597396500780017e-121),
    (100, 10.0, 4.913835073824648846e-93),
    (100, 19.5, 7.38951135949812276e-68),
    (100, 25.0, 3.392393731247061831e-59),
    (100, 29.9, 2.881518240644564614e-53),
    (100, 30.0, 3.694054550186637247e-53),
    (100, 40.0, 2.814508363790967446e-44),
    (100, 55.0, 1.658689416070730251e-35),
    (100, 100.0, 1.726686262816769578e-22),
    (100, 250.0, 6.467102394401562567e-11),
    (100, 500.0, 8.291391702361628197e-7),
    (100, 1000.0, 8.515587581548156066e-5),
    (100, 2500.0, 1.079729380032156723e-3),
    (100, 5000.0, 2.075451001604574125e-3),
    (100, 10000.0, 2.419687078729321169e-3),
    (150, 0.0, 0.0),
    (150, 2.0, 2.384480004964043767e-264),
    (150, 5.0, 6.034048530108412133e-206),
    (150, 10.0, 6.569410151802043807e-163),
    (150, 19.5, 2.499797375437787489e-123),
    (150, 25.0, 2.344901328542302514e-109),
    (150, 29.9, 1.240540214315594547e-99),
    (150, 30.0, 1.870497224584659857e-99),
    (150, 40.0, 1.467151698569816809e-84),
    (150, 55.0, 2.497602009491221738e-69),
    (150, 100.0, 3.199884962577761891e-45),
    (150, 250.0, 2.274695357944972953e-21),
    (150, 500.0, 3.482704154420601212e-12),
    (150, 1000.0, 1.66660519948970619e-7),
    (150, 2500.0, 8.868127847806872374e-5),
    (150, 5000.0, 5.94632869162981703e-4),
    (150, 10000.0, 1.295146612430129337e-3),
    (200, 0.0, 0.0),
    (200, 10.0, 4.056649805112030871e-240),
    (200, 19.5, 4.369693711454578991e-186),
    (200, 25.0, 9.219558858876896378e-167),
    (200, 29.9, 3.369304601357676227e-153),
    (200, 30.0, 5.988830628759019269e-153),
    (200, 40.0, 6.271858120299786719e-132),
    (200, 55.0, 5.042033344565742118e-110),
    (200, 100.0, 5.191015816987435328e-74),
    (200, 250.0, 1.506564665221189889e-35),
    (200, 500.0, 1.215754362334146165e-19),
    (200, 1000.0, 2.750575280562815029e-11),
    (200, 2500.0, 2.683875783449733264e-6),
    (200, 5000.0, 1.033512873447556748e-4),
    (200, 10000.0, 5.39898418098428576e-4),
];

#[test]
fn relative_error_over_grid() {
    let mut worst = 0.0f64;
    for &(n, x, expected) in REFERENCE {
        let got = bessel_i_scaled(n, x).unwrap();
        if expected == 0.0 {
            assert_eq!(got, 0.0, "n={n} x={x}");
            continue;
        }
        let rel = (got - expected).abs() / expected;
        worst = worst.max(rel);
        assert!(
            rel <= 1e-10,
            "n={n} x={x}: got {got:e}, expected {expected:e}, rel {rel:e}"
        );
    }
    println!("worst relative error {worst:e}");
}

#[test]
fn three_term_recurrence() {
    // I_{n-1}(x) - I_{n+1}(x) = (2n/x) I_n(x); scaling cancels.
    for &x in &[0.1, 0.7, 1.0, 3.3, 10.0, 24.0, 26.0, 31.0, 47.0, 100.0] {
        for n in 1..60u32 {
            let lo = bessel_i_scaled(n - 1, x).unwrap();
            let mid = bessel_i_scaled(n, x).unwrap();
            let hi = bessel_i_scaled(n + 1, x).unwrap();
            let rhs = 2.0 * f64::from(n) / x * mid;
            if rhs < 1e-280 {
                continue;
            }
            let rel = (lo - hi - rhs).abs() / rhs;
            assert!(rel < 1e-8, "n={n} x={x} rel={rel:e}");
        }
    }
}
